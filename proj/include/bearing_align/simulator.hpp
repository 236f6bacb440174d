#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bearing_align/control.hpp"
#include "bearing_align/scenario.hpp"
#include "bearing_align/sensing.hpp"
#include "bearing_align/types.hpp"

namespace bearing_align {

/// Full system state; states[0] belongs to the leader and never changes.
struct SystemState {
    double t = 0.0;
    std::vector<AgentState> states;
};

struct Derivative {
    std::vector<Matrix3> d_r;
    std::vector<Vector3> d_w;
};

/// One logged sample of one agent. e_dot_w (unforced e . w) and h_norm are
/// carried in memory for the analysis module; the CSV holds the columns
/// R00..R22, wx, wy, wz, err_frob, phi, e_norm, V per agent.
struct AgentSample {
    Matrix3 r = Matrix3::Identity();
    Vector3 w = Vector3::Zero();
    double err_frob = 0.0;
    double phi = 0.0;
    double e_norm = 0.0;
    double v = 0.0;
    double e_dot_w = 0.0;
    double h_norm = 0.0;
};

struct TrajectoryLog {
    double dt = 0.0;
    int stride = 1;
    std::string scenario_digest;
    std::vector<double> k_v;  // per agent, used for the logged V column
    std::vector<double> times;
    std::vector<std::vector<AgentSample>> rows;  // rows[sample][agent-1]
    std::optional<double> early_stop_time;
};

void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out);
void write_trajectory_csv(const TrajectoryLog& log, const std::filesystem::path& path);

struct TrialResult {
    int trial = 0;
    bool converged = false;
    double convergence_time = 0.0;
    double final_max_error = 0.0;
    double min_initial_critical_distance = 0.0;  // Frobenius distance of the
                                                 // worst agent's initial Q to
                                                 // the nearest unstable point
};

struct MonteCarloSummary {
    int trials = 0;
    std::uint64_t seed = 0;
    double t_end = 0.0;
    double threshold = 0.0;
    int converged = 0;
    std::vector<TrialResult> results;

    double convergence_fraction() const;
    double mean_convergence_time() const;
    double max_convergence_time() const;
};

struct RunOptions {
    double t_end = 0.0;
    int stride = 1;
    // Stop early once every agent's alignment error and angular velocity
    // norm are below this threshold (0 disables).
    double early_stop_threshold = 0.0;
    bool check_divergence = true;
};

/// Integrates the coupled rotation/angular-velocity dynamics of the whole
/// cascade: Rdot_i = R_i hat(w_i), wdot_i = -k_omega w_i - e_i, leader
/// fixed. Classical 4th-order steps with a polar projection of every R
/// after each step.
class Simulator {
public:
    /// Validates the scenario; throws ValidationError listing every failed
    /// condition.
    explicit Simulator(Scenario scenario);

    const Scenario& scenario() const { return scenario_; }
    const GeometryTables& tables() const { return tables_; }
    /// k_V used for the logged Lyapunov column: half the tighter of the two
    /// gain bounds, per agent.
    const std::vector<double>& lyapunov_gains() const { return k_v_; }

    SystemState initial_state() const;

    void derivative(const SystemState& s, Derivative& out) const;
    Derivative derivative(const SystemState& s) const;

    /// One integration step followed by projection to SO(3). Throws
    /// NonFiniteError if any state entry is not finite.
    SystemState step(const SystemState& s, double dt) const;
    /// Diagnostic variant without the projection (drift measurements).
    SystemState step_unprojected(const SystemState& s, double dt) const;

    /// Integrates the scenario from its initial state to t_end.
    /// Throws NonFiniteError (with timestamp) and DivergedError when any
    /// Phi exceeds 10x its initial value for 1000 consecutive steps.
    TrajectoryLog run() const;
    TrajectoryLog run(const SystemState& from, const RunOptions& options) const;

    /// Uniformly random initial orientations (Haar), small random initial
    /// angular velocities; reports the convergence fraction and times.
    MonteCarloSummary monte_carlo(int trials, std::uint64_t seed, double t_end = 60.0,
                                  double threshold = 1e-6) const;

    AgentEval evaluate(const SystemState& s, int agent) const;

private:
    struct Workspace;
    void eval_all(const SystemState& s, Workspace& ws) const;
    void derivative_with(const SystemState& s, Workspace& ws, Derivative& out) const;
    SystemState step_impl(const SystemState& s, double dt, Workspace& ws, bool project,
                          bool k1_ready) const;
    TrajectoryLog run_impl(const SystemState& from, const RunOptions& options,
                           Workspace& ws) const;
    AgentState initial_agent_state(int id) const;

    Scenario scenario_;
    GeometryTables tables_;
    std::vector<double> k_v_;
    std::string digest_;
};

/// Derives a per-trial RNG seed from the base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace bearing_align
