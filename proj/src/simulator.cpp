#include "bearing_align/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include "bearing_align/log.hpp"
#include "bearing_align/so3.hpp"

namespace bearing_align {

namespace {

constexpr double kDivergencePhiFloor = 1e-9;  // absolute guard for aligned starts
constexpr int kDivergenceSteps = 1000;

double max_alignment_error(const SystemState& s) {
    double worst = 0.0;
    const Matrix3& r1 = s.states[0].R.matrix();
    for (size_t i = 1; i < s.states.size(); ++i) {
        const double err =
            (Matrix3::Identity() - s.states[i].R.matrix().transpose() * r1).norm();
        worst = std::max(worst, err);
    }
    return worst;
}

double max_angular_rate(const SystemState& s) {
    double worst = 0.0;
    for (size_t i = 1; i < s.states.size(); ++i) {
        worst = std::max(worst, s.states[i].w.norm());
    }
    return worst;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (index + 1);
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

double MonteCarloSummary::convergence_fraction() const {
    return trials > 0 ? static_cast<double>(converged) / trials : 0.0;
}

double MonteCarloSummary::mean_convergence_time() const {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : results) {
        if (r.converged) {
            sum += r.convergence_time;
            ++count;
        }
    }
    return count > 0 ? sum / count : 0.0;
}

double MonteCarloSummary::max_convergence_time() const {
    double worst = 0.0;
    for (const auto& r : results) {
        if (r.converged) worst = std::max(worst, r.convergence_time);
    }
    return worst;
}

struct Simulator::Workspace {
    std::vector<MeasurementSet> sets;
    std::vector<AgentEval> evals;
    Derivative k1, k2, k3, k4;
    SystemState stage;
};

Simulator::Simulator(Scenario scenario) : scenario_(std::move(scenario)) {
    const ValidationReport report = validate_scenario(scenario_);
    if (!report.passed()) {
        throw ValidationError("scenario validation failed:\n" + report.to_string());
    }
    tables_ = GeometryTables::build(scenario_);
    digest_ = scenario_digest(scenario_);

    k_v_.assign(static_cast<size_t>(scenario_.n()), 0.0);
    for (int i = 2; i <= scenario_.n(); ++i) {
        const KMatrix k = agent_k_matrix(i, scenario_, tables_);
        if (k.degenerate_spectrum) {
            logging::warn("agent " + std::to_string(i) +
                          ": K spectrum is degenerate; critical-point enumeration disabled");
        }
        const GainBounds bounds = gain_bounds(k, scenario_.gains.k_omega);
        k_v_[static_cast<size_t>(i - 1)] =
            0.5 * std::min(bounds.k_v_max_positivity, bounds.k_v_max_decrease);
    }
}

AgentState Simulator::initial_agent_state(int id) const {
    const AgentSpec& spec = scenario_.agent(id);
    AgentState st;
    st.R = spec.initial_orientation;
    st.w = (id == 1) ? Vector3::Zero() : spec.initial_angular_velocity;
    return st;
}

SystemState Simulator::initial_state() const {
    SystemState s;
    s.t = 0.0;
    for (int i = 1; i <= scenario_.n(); ++i) {
        s.states.push_back(initial_agent_state(i));
    }
    return s;
}

void Simulator::eval_all(const SystemState& s, Workspace& ws) const {
    measure_all(tables_, s.states, ws.sets);
    ws.evals.resize(static_cast<size_t>(scenario_.n()));
    const Matrix3& r1 = s.states[0].R.matrix();
    for (int i = 1; i <= scenario_.n(); ++i) {
        ws.evals[static_cast<size_t>(i - 1)] =
            evaluate_agent(i, ws.sets, tables_, r1, scenario_.gains);
    }
}

void Simulator::derivative_with(const SystemState& s, Workspace& ws, Derivative& out) const {
    eval_all(s, ws);
    const size_t n = s.states.size();
    out.d_r.resize(n);
    out.d_w.resize(n);
    out.d_r[0].setZero();  // the leader does not rotate
    out.d_w[0].setZero();
    const double k_omega = scenario_.gains.k_omega;
    for (size_t i = 1; i < n; ++i) {
        out.d_r[i] = s.states[i].R.matrix() * hat(s.states[i].w);
        out.d_w[i] = -k_omega * s.states[i].w - ws.evals[i].e;
    }
}

void Simulator::derivative(const SystemState& s, Derivative& out) const {
    Workspace ws;
    derivative_with(s, ws, out);
}

Derivative Simulator::derivative(const SystemState& s) const {
    Derivative out;
    derivative(s, out);
    return out;
}

SystemState Simulator::step_impl(const SystemState& s, double dt, Workspace& ws, bool project,
                                 bool k1_ready) const {
    const size_t n = s.states.size();
    if (!k1_ready) {
        derivative_with(s, ws, ws.k1);
    }

    ws.stage.states.resize(n);
    const auto fill_stage = [&](const Derivative& k, double h) {
        ws.stage.t = s.t + h;
        for (size_t i = 0; i < n; ++i) {
            ws.stage.states[i].R = Rotation::from_matrix_unchecked(s.states[i].R.matrix() +
                                                                   h * k.d_r[i]);
            ws.stage.states[i].w = s.states[i].w + h * k.d_w[i];
        }
    };
    fill_stage(ws.k1, 0.5 * dt);
    derivative_with(ws.stage, ws, ws.k2);
    fill_stage(ws.k2, 0.5 * dt);
    derivative_with(ws.stage, ws, ws.k3);
    fill_stage(ws.k3, dt);
    derivative_with(ws.stage, ws, ws.k4);

    SystemState out;
    out.t = s.t + dt;
    out.states.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const Matrix3 r = s.states[i].R.matrix() +
                          (dt / 6.0) * (ws.k1.d_r[i] + 2.0 * ws.k2.d_r[i] + 2.0 * ws.k3.d_r[i] +
                                        ws.k4.d_r[i]);
        const Vector3 w = s.states[i].w +
                          (dt / 6.0) * (ws.k1.d_w[i] + 2.0 * ws.k2.d_w[i] + 2.0 * ws.k3.d_w[i] +
                                        ws.k4.d_w[i]);
        if (!r.allFinite() || !w.allFinite()) {
            throw NonFiniteError("non-finite state at t = " + std::to_string(out.t));
        }
        out.states[i].R = project ? project_to_so3(r) : Rotation::from_matrix_unchecked(r);
        out.states[i].w = w;
    }
    return out;
}

SystemState Simulator::step(const SystemState& s, double dt) const {
    if (!(dt > 0.0)) {
        throw Error("step: dt must be positive");
    }
    Workspace ws;
    return step_impl(s, dt, ws, true, false);
}

SystemState Simulator::step_unprojected(const SystemState& s, double dt) const {
    Workspace ws;
    return step_impl(s, dt, ws, false, false);
}

TrajectoryLog Simulator::run_impl(const SystemState& from, const RunOptions& options,
                                  Workspace& ws) const {
    const double dt = scenario_.integration.dt;
    const int n = scenario_.n();
    const long n_steps = std::lround(std::max(options.t_end - from.t, 0.0) / dt);

    TrajectoryLog log;
    log.dt = dt;
    log.stride = options.stride;
    log.scenario_digest = digest_;
    log.k_v = k_v_;

    std::vector<double> phi_threshold(static_cast<size_t>(n), 0.0);
    std::vector<int> phi_over_count(static_cast<size_t>(n), 0);

    SystemState current = from;
    // Records a sample from the freshest ws.evals (evaluated at s).
    const auto record_sample = [&](const SystemState& s) {
        log.times.push_back(s.t);
        std::vector<AgentSample> row(static_cast<size_t>(n));
        const Matrix3& r1 = s.states[0].R.matrix();
        for (int i = 1; i <= n; ++i) {
            AgentSample& a = row[static_cast<size_t>(i - 1)];
            const AgentState& st = s.states[static_cast<size_t>(i - 1)];
            const AgentEval& ev = ws.evals[static_cast<size_t>(i - 1)];
            a.r = st.R.matrix();
            a.w = st.w;
            a.err_frob = (Matrix3::Identity() - st.R.matrix().transpose() * r1).norm();
            a.phi = ev.phi;
            a.e_norm = ev.e.norm();
            a.e_dot_w = ev.e_unforced.dot(st.w);
            a.h_norm = (ev.e_unforced - ev.e).norm();
            a.v = lyapunov_value(ev.phi, st.w, ev.e_unforced,
                                 k_v_[static_cast<size_t>(i - 1)]);
        }
        log.rows.push_back(std::move(row));
    };

    if (n_steps == 0) {
        return log;  // zero-length run: header-only output
    }

    bool logged_last = false;
    for (long k = 0; k <= n_steps; ++k) {
        // The k1 evaluation doubles as the sample-time evaluation.
        derivative_with(current, ws, ws.k1);

        if (k == 0) {
            // A follower's Phi legitimately overshoots its own initial value
            // while upstream agents are still aligning, so the divergence
            // threshold accumulates the upstream initial energy.
            double upstream = 0.0;
            for (int i = 2; i <= n; ++i) {
                upstream += ws.evals[static_cast<size_t>(i - 1)].phi +
                            0.5 * current.states[static_cast<size_t>(i - 1)].w.squaredNorm();
                phi_threshold[static_cast<size_t>(i - 1)] =
                    10.0 * upstream + kDivergencePhiFloor;
            }
        } else if (options.check_divergence) {
            for (int i = 2; i <= n; ++i) {
                auto& count = phi_over_count[static_cast<size_t>(i - 1)];
                if (ws.evals[static_cast<size_t>(i - 1)].phi >
                    phi_threshold[static_cast<size_t>(i - 1)]) {
                    if (++count >= kDivergenceSteps) {
                        throw DivergedError("agent " + std::to_string(i) +
                                            " diverged by t = " + std::to_string(current.t));
                    }
                } else {
                    count = 0;
                }
            }
        }

        logged_last = false;
        if (k % options.stride == 0) {
            record_sample(current);
            logged_last = true;
        }
        if (options.early_stop_threshold > 0.0 &&
            max_alignment_error(current) < options.early_stop_threshold &&
            max_angular_rate(current) < options.early_stop_threshold) {
            log.early_stop_time = current.t;
            break;
        }
        if (k == n_steps) break;

        current = step_impl(current, dt, ws, true, true);
    }
    if (!logged_last) {
        derivative_with(current, ws, ws.k1);
        record_sample(current);  // tail sample so terminal errors are recorded
    }
    return log;
}

TrajectoryLog Simulator::run() const {
    Workspace ws;
    RunOptions options;
    options.t_end = scenario_.integration.t_end;
    options.stride = scenario_.integration.log_stride;
    return run_impl(initial_state(), options, ws);
}

TrajectoryLog Simulator::run(const SystemState& from, const RunOptions& options) const {
    Workspace ws;
    return run_impl(from, options, ws);
}

AgentEval Simulator::evaluate(const SystemState& s, int agent) const {
    Workspace ws;
    eval_all(s, ws);
    return ws.evals[static_cast<size_t>(agent - 1)];
}

MonteCarloSummary Simulator::monte_carlo(int trials, std::uint64_t seed, double t_end,
                                         double threshold) const {
    MonteCarloSummary summary;
    summary.trials = std::max(trials, 0);
    summary.seed = seed;
    summary.t_end = t_end;
    summary.threshold = threshold;
    if (trials <= 0) {
        return summary;
    }

    // Unstable critical points of every follower, for the inspection metric.
    std::vector<std::vector<Matrix3>> unstable(static_cast<size_t>(scenario_.n()));
    for (int i = 2; i <= scenario_.n(); ++i) {
        const KMatrix k = agent_k_matrix(i, scenario_, tables_);
        if (!k.degenerate_spectrum) {
            const auto points = critical_points(k);
            for (int p = 1; p < 4; ++p) {
                unstable[static_cast<size_t>(i - 1)].push_back(
                    points[static_cast<size_t>(p)].matrix());
            }
        }
    }

    summary.results.assign(static_cast<size_t>(trials), TrialResult{});
    std::atomic<int> next{0};
    const int worker_count =
        std::max(1, std::min<int>(static_cast<int>(std::thread::hardware_concurrency()),
                                  trials));

    const auto work = [&]() {
        Workspace ws;
        for (int trial = next.fetch_add(1); trial < trials; trial = next.fetch_add(1)) {
            std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
            std::uniform_real_distribution<double> small_w(-0.1, 0.1);

            SystemState s0;
            s0.t = 0.0;
            for (int i = 1; i <= scenario_.n(); ++i) {
                AgentState st;
                st.R = sample_uniform_rotation(rng);
                st.w = (i == 1) ? Vector3::Zero()
                                : Vector3(small_w(rng), small_w(rng), small_w(rng));
                s0.states.push_back(st);
            }

            TrialResult result;
            result.trial = trial;
            double min_dist = std::numeric_limits<double>::infinity();
            const Matrix3& r1 = s0.states[0].R.matrix();
            for (int i = 2; i <= scenario_.n(); ++i) {
                const Matrix3 q = s0.states[static_cast<size_t>(i - 1)].R.matrix() *
                                  r1.transpose();
                for (const Matrix3& p : unstable[static_cast<size_t>(i - 1)]) {
                    min_dist = std::min(min_dist, (q - p).norm());
                }
            }
            result.min_initial_critical_distance = std::isfinite(min_dist) ? min_dist : -1.0;

            RunOptions options;
            options.t_end = t_end;
            options.stride = std::numeric_limits<int>::max();
            options.early_stop_threshold = threshold;
            const TrajectoryLog log = run_impl(s0, options, ws);
            if (log.early_stop_time.has_value()) {
                result.converged = true;
                result.convergence_time = *log.early_stop_time;
                result.final_max_error = 0.0;
            } else {
                result.converged = false;
                result.convergence_time = -1.0;
                double worst = 0.0;
                for (const auto& a : log.rows.back()) {
                    worst = std::max(worst, a.err_frob);
                }
                result.final_max_error = worst;
            }
            summary.results[static_cast<size_t>(trial)] = result;
        }
    };

    std::vector<std::thread> workers;
    for (int i = 0; i < worker_count; ++i) {
        workers.emplace_back(work);
    }
    for (auto& w : workers) {
        w.join();
    }
    for (const auto& r : summary.results) {
        if (r.converged) ++summary.converged;
    }
    return summary;
}

namespace {

void append_number(std::string& line, double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), ",%.17g", value);
    line += buf;
}

}  // namespace

void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out) {
    const size_t n = log.rows.empty() ? log.k_v.size() : log.rows.front().size();
    std::string header = "t";
    for (size_t i = 1; i <= n; ++i) {
        const std::string p = "a" + std::to_string(i) + "_";
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                header += "," + p + "R" + std::to_string(r) + std::to_string(c);
            }
        }
        header += "," + p + "wx," + p + "wy," + p + "wz," + p + "err_frob," + p + "phi," + p +
                  "e_norm," + p + "V";
    }
    out << header << "\n";

    std::string line;
    for (size_t row = 0; row < log.rows.size(); ++row) {
        line.clear();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", log.times[row]);
        line += buf;
        for (const AgentSample& a : log.rows[row]) {
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    append_number(line, a.r(r, c));
                }
            }
            append_number(line, a.w.x());
            append_number(line, a.w.y());
            append_number(line, a.w.z());
            append_number(line, a.err_frob);
            append_number(line, a.phi);
            append_number(line, a.e_norm);
            append_number(line, a.v);
        }
        out << line << "\n";
    }
}

void write_trajectory_csv(const TrajectoryLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write trajectory CSV: " + path.string());
    }
    write_trajectory_csv(log, out);
}

}  // namespace bearing_align
