#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "bearing_align/analysis.hpp"
#include "bearing_align/log.hpp"
#include "bearing_align/scenario.hpp"
#include "bearing_align/simulator.hpp"

namespace {

namespace ba = bearing_align;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitParse = 3;

struct CommonOptions {
    std::string scenario_path;
    std::string out_dir = "out";
    std::uint64_t seed = 42;
    std::optional<double> dt;
    std::optional<double> t_end;
    std::optional<std::string> landmark_mode;
    std::optional<double> target_spread;
    int trials = 100;
    int agent = 2;
};

ba::Scenario load_with_overrides(const CommonOptions& opt) {
    ba::Scenario s =
        opt.scenario_path.empty() ? ba::default_scenario() : ba::load_scenario(opt.scenario_path);
    if (opt.dt.has_value()) s.integration.dt = *opt.dt;
    if (opt.t_end.has_value()) s.integration.t_end = *opt.t_end;
    if (opt.landmark_mode.has_value()) {
        s.landmark_mode = ba::landmark_mode_from_string(*opt.landmark_mode);
    }
    if (opt.target_spread.has_value()) {
        auto [designed, achieved] = ba::apply_gain_design(s, *opt.target_spread);
        ba::logging::info("gain design achieved spread " + std::to_string(achieved));
        s = designed;
    }
    return s;
}

void write_json(const nlohmann::ordered_json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ba::Error("cannot write " + path.string());
    }
    out << j.dump(2) << "\n";
}

int cmd_validate(const CommonOptions& opt) {
    const ba::Scenario s = load_with_overrides(opt);
    const ba::ValidationReport report = ba::validate_scenario(s);
    if (report.passed()) {
        std::cout << "scenario valid (" << s.n() << " agents, " << s.landmarks.size()
                  << " landmarks, mode " << ba::to_string(s.landmark_mode) << ")\n";
        return kExitOk;
    }
    std::cout << "scenario invalid:\n" << report.to_string();
    return kExitValidation;
}

int cmd_run(const CommonOptions& opt) {
    const ba::Scenario s = load_with_overrides(opt);
    const ba::Simulator sim(s);
    ba::logging::info("running " + std::to_string(s.integration.t_end) + " s at dt " +
                      std::to_string(s.integration.dt));
    const ba::TrajectoryLog log = sim.run();

    fs::create_directories(opt.out_dir);
    ba::write_trajectory_csv(log, fs::path(opt.out_dir) / "trajectory.csv");
    const ba::ConvergenceReport report = ba::convergence_analysis(log, 1e-6);
    write_json(ba::to_json(report), fs::path(opt.out_dir) / "convergence.json");

    for (const auto& a : report.agents) {
        std::printf("agent %d: terminal error %.3e, %s\n", a.agent, a.terminal_error,
                    a.converged ? "converged" : "not converged");
    }
    return kExitOk;
}

int cmd_sweep(const CommonOptions& opt) {
    const ba::Scenario s = load_with_overrides(opt);
    const ba::Simulator sim(s);
    const double mc_t_end = opt.t_end.value_or(60.0);
    ba::logging::info("monte carlo: " + std::to_string(opt.trials) + " trials");
    const ba::MonteCarloSummary mc = sim.monte_carlo(opt.trials, opt.seed, mc_t_end);

    fs::create_directories(opt.out_dir);
    write_json(ba::to_json(mc), fs::path(opt.out_dir) / "monte_carlo.json");

    const double spreads[] = {opt.target_spread.value_or(0.01), 1.0};
    const double scales[] = {0.5, 10.0};
    const int cell_trials = std::min(opt.trials, 20);
    const auto cells = ba::iss_gain_experiment(s, spreads, scales, cell_trials, opt.seed);
    write_json(ba::to_json(cells), fs::path(opt.out_dir) / "iss_table.json");

    std::printf("monte carlo: %d/%d converged (fraction %.3f, mean time %.2f s)\n", mc.converged,
                mc.trials, mc.convergence_fraction(), mc.mean_convergence_time());
    for (const auto& c : cells) {
        std::printf("iss: spread %.3g (achieved %.3g), scale %.3g -> fraction %.3f\n",
                    c.target_spread, c.achieved_spread, c.gain_scale, c.convergence_fraction);
    }
    return kExitOk;
}

int cmd_equilibria(const CommonOptions& opt) {
    if (opt.agent < 2) {
        std::cerr << "equilibria: the leader has no alignment law; pick an agent >= 2\n";
        return kExitValidation;
    }
    const ba::Scenario s = load_with_overrides(opt);
    const ba::EquilibriumReport report = ba::equilibrium_probe(opt.agent, s, 1e-3, 20, 20.0,
                                                               opt.seed);
    fs::create_directories(opt.out_dir);
    write_json(ba::to_json(report),
               fs::path(opt.out_dir) / ("equilibria_agent" + std::to_string(opt.agent) + ".json"));

    for (const auto& p : report.points) {
        std::printf("%-8s phi=%.6f residual=%.2e escapes=%d/%d converged=%d/%d\n",
                    ba::to_string(p.classification).c_str(), p.phi_value, p.residual, p.escapes,
                    p.perturbations, p.converged, p.perturbations);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bearing-only orientation alignment for leader-follower networks on SO(3)"};
    app.require_subcommand(1);

    CommonOptions opt;
    const auto add_common = [&opt](CLI::App* cmd) {
        cmd->add_option("--scenario", opt.scenario_path, "Scenario JSON file (default: built-in)");
        cmd->add_option("--out", opt.out_dir, "Output directory");
        cmd->add_option("--seed", opt.seed, "RNG seed");
        cmd->add_option("--dt", opt.dt, "Integration step override (s)");
        cmd->add_option("--t-end", opt.t_end, "End time override (s)");
        cmd->add_option("--landmark-mode", opt.landmark_mode, "multi|single|none");
        cmd->add_option("--target-spread", opt.target_spread,
                        "Redesign follower gains toward this spectral spread");
        cmd->add_option("--trials", opt.trials, "Monte Carlo trials");
        cmd->add_option("--agent", opt.agent, "Agent id for equilibria");
    };

    CLI::App* validate = app.add_subcommand("validate", "Check a scenario file");
    CLI::App* run = app.add_subcommand("run", "Simulate and write trajectory + report");
    CLI::App* sweep = app.add_subcommand("sweep", "Monte Carlo summary and ISS gain table");
    CLI::App* equilibria = app.add_subcommand("equilibria", "Probe the four critical points");
    for (CLI::App* cmd : {validate, run, sweep, equilibria}) {
        add_common(cmd);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(opt);
        if (run->parsed()) return cmd_run(opt);
        if (sweep->parsed()) return cmd_sweep(opt);
        if (equilibria->parsed()) return cmd_equilibria(opt);
    } catch (const ba::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitParse;
    } catch (const ba::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return kExitValidation;
    } catch (const ba::DivergedError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const ba::NonFiniteError& e) {
        std::cerr << "non-finite state: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const ba::DegenerateSpectrumError& e) {
        std::cerr << "degenerate spectrum: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const ba::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
