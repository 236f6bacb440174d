#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "bearing_align/control.hpp"
#include "bearing_align/scenario.hpp"
#include "bearing_align/simulator.hpp"

namespace bearing_align {

struct AgentConvergence {
    int agent = 0;
    bool converged = false;
    double time_to_threshold = -1.0;
    std::optional<double> rate;       // fitted exponential rate (1/s)
    std::optional<double> r_squared;  // quality of the log-linear fit
    double terminal_error = 0.0;
};

struct ConvergenceReport {
    double threshold = 0.0;
    std::string scenario_digest;
    std::vector<AgentConvergence> agents;
};

/// Fits the exponential tail of each agent's alignment error by least
/// squares on log(err) over the final four decades before the threshold
/// crossing (the underdamped tail oscillates; a narrower window sees only
/// a notch or plateau). Rates are reported only for converged agents.
ConvergenceReport convergence_analysis(const TrajectoryLog& log, double threshold);

struct EquilibriumPointProbe {
    Matrix3 point = Matrix3::Identity();
    CriticalPointType classification = CriticalPointType::minimum;
    double phi_value = 0.0;
    double residual = 0.0;  // ||e|| at the exact critical point
    int perturbations = 0;
    int escapes = 0;            // Phi dropped 1% below the critical value
    int converged = 0;          // trapped in the identity basin
    double max_escape_time = 0.0;
    double max_convergence_time = 0.0;
};

struct EquilibriumReport {
    int agent = 0;
    Vector3 eigenvalues = Vector3::Zero();
    std::vector<EquilibriumPointProbe> points;  // identity first
};

/// Places the agent at each critical point of its error function (all other
/// agents aligned with the leader, zero rates), verifies the equilibrium
/// residual, then applies random tangent perturbations of the given
/// magnitude and simulates. Escape means Phi falls below 99% of the
/// critical value; convergence to identity is certified once the agent's
/// energy Phi + 0.5||w||^2 falls below 99% of the lowest saddle value,
/// which traps the trajectory in the identity basin.
EquilibriumReport equilibrium_probe(int agent, const Scenario& scenario, double perturbation,
                                    int perturbations = 20, double horizon = 20.0,
                                    std::uint64_t seed = 2024);

struct LyapunovAudit {
    int agent = 0;
    double k_v = 0.0;
    double max_positive_jump = 0.0;
    int violations = 0;       // jumps above tolerance away from equilibrium
    int considered = 0;
    double violation_fraction = 0.0;
};

/// Checks monotonicity of V = Phi + 0.5||w||^2 + k_V (e.w) along a logged
/// trajectory. Jumps within `tolerance` count as integration noise; samples
/// already at equilibrium are excluded.
LyapunovAudit lyapunov_audit(const TrajectoryLog& log, int agent,
                             std::optional<double> k_v = std::nullopt,
                             double tolerance = 1e-8);

struct IssCell {
    double target_spread = 0.0;
    double achieved_spread = 0.0;  // worst follower after gain design
    double gain_scale = 0.0;
    int trials = 0;
    double convergence_fraction = 0.0;
    double mean_convergence_time = 0.0;
};

/// Sweeps the spectral-spread target of the follower gain design and a
/// common scale on all alignment gains; each cell reports the Monte Carlo
/// fraction that converged within the scenario's t_end.
std::vector<IssCell> iss_gain_experiment(const Scenario& scenario,
                                         std::span<const double> spread_values,
                                         std::span<const double> gain_scales, int trials,
                                         std::uint64_t seed);

/// Applies design_gains_search to every follower of the scenario and
/// returns the modified scenario plus the worst achieved spread.
std::pair<Scenario, double> apply_gain_design(const Scenario& scenario, double target_spread);

nlohmann::ordered_json to_json(const ConvergenceReport& report);
nlohmann::ordered_json to_json(const EquilibriumReport& report);
nlohmann::ordered_json to_json(const MonteCarloSummary& summary);
nlohmann::ordered_json to_json(std::span<const IssCell> cells);

}  // namespace bearing_align
