#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bearing_align/types.hpp"

namespace bearing_align {

struct AgentSpec {
    int id = 0;  // ids are 1..n contiguous; agent 1 is the leader
    Vector3 position = Vector3::Zero();
    Rotation initial_orientation;
    Vector3 initial_angular_velocity = Vector3::Zero();
};

struct LandmarkSpec {
    std::string id;  // "x1", "x2", ...
    Vector3 position = Vector3::Zero();
};

/// Directed sensing/information-flow graph. An edge (i, j) means agent i
/// measures the direction to j and receives data communicated by j; the
/// sensing itself is bidirectional, so j also measures the direction to i.
struct SensingGraph {
    int agent_count = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<std::pair<int, std::string>> landmark_edges;  // agents 1 and 2 only

    /// Formal neighbor set N_i (targets of out-edges), sorted ascending.
    std::vector<int> neighbors_of(int agent) const;
    /// Everyone agent i exchanges direction measurements with (out or in).
    std::vector<int> sensing_partners_of(int agent) const;
    std::vector<std::string> landmark_targets_of(int agent) const;
};

/// Control gains. Targets are agent ids as decimal strings, landmark ids,
/// "virtual" for the synthesized third direction, or "tri" for the
/// no-landmark triangulation normal. Entries not present default to 1.
struct GainTable {
    double k_omega = 2.0;
    std::map<std::pair<int, std::string>, double> k;

    double gain(int agent, const std::string& target) const;
    void set(int agent, const std::string& target, double value);
};

enum class LandmarkMode { multi, single, none };

std::string to_string(LandmarkMode mode);
LandmarkMode landmark_mode_from_string(const std::string& s);

struct IntegrationSettings {
    double dt = 1e-3;     // seconds
    double t_end = 30.0;  // seconds
    int log_stride = 100;
};

struct Scenario {
    std::vector<AgentSpec> agents;
    std::vector<LandmarkSpec> landmarks;
    SensingGraph graph;
    GainTable gains;
    IntegrationSettings integration;
    LandmarkMode landmark_mode = LandmarkMode::multi;

    int n() const { return static_cast<int>(agents.size()); }
    const AgentSpec& agent(int id) const;
    const LandmarkSpec* find_landmark(const std::string& id) const;

    /// Landmarks measured by both agents 1 and 2, sorted by id. In single
    /// mode only the first is used; in none mode the list is ignored.
    std::vector<std::string> common_landmarks() const;
};

struct Violation {
    enum class Kind {
        Collocated,
        Collinear,
        Coplanar,
        FollowerCollinear,
        GraphShape,
        InvalidGain,
        InvalidIntegration,
    };
    Kind kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool passed() const { return violations.empty(); }
    std::string to_string() const;
};

/// Checks every Definition-1 / Assumption-2 condition and reports all
/// violations. Deterministic and side-effect free; a passing report is
/// required before simulation.
ValidationReport validate_scenario(const Scenario& s);

/// ||(b-a) x (c-a)|| / (||b-a|| ||c-a||) in [0, 1]; 0 iff collinear.
/// Throws CollocatedError if any pair of points is within 1e-9.
double collinearity_measure(const Vector3& a, const Vector3& b, const Vector3& c);

/// Smallest singular value of the centered point matrix normalized by the
/// largest; 0 iff the points are coplanar. Requires >= 4 points.
double coplanarity_measure(std::span<const Vector3> points);

/// The bundled eight-agent, two-landmark scenario with the published
/// initial orientations.
Scenario default_scenario();

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::ordered_json scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// FNV-1a hash of the canonical JSON serialization, as fixed-width hex.
std::string scenario_digest(const Scenario& s);

}  // namespace bearing_align
