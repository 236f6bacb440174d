#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace bearing_align::logging {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

/// Threshold from BEARING_ALIGN_LOG (error|warn|info|debug), default warn.
inline Level threshold() {
    static const Level level = [] {
        const char* env = std::getenv("BEARING_ALIGN_LOG");
        if (env == nullptr) return Level::warn;
        const std::string v(env);
        if (v == "error") return Level::error;
        if (v == "info") return Level::info;
        if (v == "debug") return Level::debug;
        return Level::warn;
    }();
    return level;
}

inline void log(Level level, const std::string& message) {
    if (level > threshold()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << "\n";
}

inline void error(const std::string& m) { log(Level::error, m); }
inline void warn(const std::string& m) { log(Level::warn, m); }
inline void info(const std::string& m) { log(Level::info, m); }
inline void debug(const std::string& m) { log(Level::debug, m); }

}  // namespace bearing_align::logging
