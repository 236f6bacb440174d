#include "bearing_align/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "bearing_align/so3.hpp"

namespace bearing_align {

namespace {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    int points = 0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    LinearFit fit;
    fit.points = static_cast<int>(x.size());
    if (x.size() < 2) return fit;
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-300) return fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double mean_y = sy / n;
    for (size_t i = 0; i < x.size(); ++i) {
        const double pred = fit.intercept + fit.slope * x[i];
        ss_res += (y[i] - pred) * (y[i] - pred);
        ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
    }
    fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

}  // namespace

ConvergenceReport convergence_analysis(const TrajectoryLog& log, double threshold) {
    ConvergenceReport report;
    report.threshold = threshold;
    report.scenario_digest = log.scenario_digest;
    if (log.rows.empty()) {
        // Zero-length run: every agent reports NotConverged with no data.
        for (size_t i = 0; i < log.k_v.size(); ++i) {
            AgentConvergence out;
            out.agent = static_cast<int>(i + 1);
            out.converged = false;
            out.terminal_error = -1.0;
            report.agents.push_back(out);
        }
        return report;
    }
    const size_t n = log.rows.front().size();
    const size_t samples = log.rows.size();

    for (size_t agent = 0; agent < n; ++agent) {
        AgentConvergence out;
        out.agent = static_cast<int>(agent + 1);
        out.terminal_error = log.rows.back()[agent].err_frob;
        out.converged = out.terminal_error < threshold;
        if (!out.converged) {
            report.agents.push_back(out);
            continue;
        }
        // First index after which the error stays below threshold.
        size_t crossing = 0;
        for (size_t s = samples; s-- > 0;) {
            if (log.rows[s][agent].err_frob >= threshold) {
                crossing = s + 1;
                break;
            }
        }
        out.time_to_threshold = log.times[std::min(crossing, samples - 1)];

        // Fit window: the final four decades of decay before the crossing.
        // The closed loop is underdamped, so one decade holds less than one
        // oscillation period and the fit would see only a notch or plateau;
        // four decades average over the oscillation.
        std::vector<double> ts, ys;
        for (size_t s = 0; s < crossing; ++s) {
            const double err = log.rows[s][agent].err_frob;
            if (err >= threshold && err <= 1e4 * threshold) {
                ts.push_back(log.times[s]);
                ys.push_back(std::log(err));
            }
        }
        if (ts.size() < 5) {
            // Short log: fall back to the last samples before the crossing.
            ts.clear();
            ys.clear();
            const size_t start = crossing > 10 ? crossing - 10 : 0;
            for (size_t s = start; s < crossing; ++s) {
                const double err = log.rows[s][agent].err_frob;
                if (err > 0.0) {
                    ts.push_back(log.times[s]);
                    ys.push_back(std::log(err));
                }
            }
        }
        if (ts.size() >= 2) {
            const LinearFit fit = fit_line(ts, ys);
            if (fit.slope < 0.0) {
                out.rate = -fit.slope;
                out.r_squared = fit.r_squared;
            }
        }
        report.agents.push_back(out);
    }
    return report;
}

EquilibriumReport equilibrium_probe(int agent, const Scenario& scenario, double perturbation,
                                    int perturbations, double horizon, std::uint64_t seed) {
    if (agent < 2 || agent > scenario.n()) {
        throw Error("equilibrium_probe: agent must be a follower (>= 2)");
    }
    const Simulator sim(scenario);
    const KMatrix k = agent_k_matrix(agent, scenario, sim.tables());
    if (k.degenerate_spectrum) {
        throw DegenerateSpectrumError("equilibrium_probe: K spectrum is degenerate");
    }
    const auto points = critical_points(k);
    const auto types = classify_critical_points(k);
    const Vector3& lam = k.eigenvalues;
    const std::array<double, 4> phi_values = {0.0, 2.0 * (lam(1) + lam(2)),
                                              2.0 * (lam(0) + lam(2)),
                                              2.0 * (lam(0) + lam(1))};
    // Energy below the lowest saddle level traps the trajectory in the
    // identity basin: Phi + 0.5||w||^2 decays along the unforced flow.
    const double basin_level = 0.99 * 2.0 * (lam(0) + lam(1));

    EquilibriumReport report;
    report.agent = agent;
    report.eigenvalues = lam;

    const Rotation r1 = scenario.agent(1).initial_orientation;
    const auto make_state = [&](const Rotation& q, const Vector3& tangent) {
        SystemState s;
        s.t = 0.0;
        for (int i = 1; i <= scenario.n(); ++i) {
            AgentState st;
            st.R = r1;
            st.w = Vector3::Zero();
            s.states.push_back(st);
        }
        Rotation r_agent = q * r1;
        if (tangent.norm() > 0.0) {
            r_agent = r_agent * exp_so3(tangent);
        }
        s.states[static_cast<size_t>(agent - 1)].R = r_agent;
        return s;
    };

    for (size_t p = 0; p < 4; ++p) {
        EquilibriumPointProbe probe;
        probe.point = points[p].matrix();
        probe.classification = types[p];
        probe.phi_value = phi_values[p];
        probe.perturbations = perturbations;

        const SystemState at_point = make_state(points[p], Vector3::Zero());
        probe.residual = sim.evaluate(at_point, agent).e.norm();

        std::mt19937_64 rng(derive_seed(seed, p));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double escape_level = phi_values[p] * 0.99;
        const size_t idx = static_cast<size_t>(agent - 1);

        for (int trial = 0; trial < perturbations; ++trial) {
            Vector3 dir(gauss(rng), gauss(rng), gauss(rng));
            while (dir.norm() < 1e-12) {
                dir = Vector3(gauss(rng), gauss(rng), gauss(rng));
            }
            dir.normalize();

            RunOptions options;
            options.t_end = horizon;
            options.stride = 10;  // 10 ms resolution for the crossing times
            const TrajectoryLog log =
                sim.run(make_state(points[p], perturbation * dir), options);

            bool escaped = p == 0;  // the minimum has nothing to escape from
            bool trapped = false;
            for (size_t s = 0; s < log.rows.size() && !(escaped && trapped); ++s) {
                const AgentSample& a = log.rows[s][idx];
                const double energy = a.phi + 0.5 * a.w.squaredNorm();
                if (!escaped && a.phi < escape_level) {
                    escaped = true;
                    probe.max_escape_time = std::max(probe.max_escape_time, log.times[s]);
                }
                if (!trapped && energy < basin_level) {
                    trapped = true;
                    probe.max_convergence_time =
                        std::max(probe.max_convergence_time, log.times[s]);
                }
            }
            if (escaped && p != 0) ++probe.escapes;
            if (trapped) ++probe.converged;
        }
        report.points.push_back(probe);
    }
    return report;
}

LyapunovAudit lyapunov_audit(const TrajectoryLog& log, int agent, std::optional<double> k_v,
                             double tolerance) {
    if (log.rows.empty()) {
        throw Error("lyapunov_audit: empty trajectory log");
    }
    LyapunovAudit audit;
    audit.agent = agent;
    audit.k_v = k_v.value_or(log.k_v[static_cast<size_t>(agent - 1)]);

    const size_t idx = static_cast<size_t>(agent - 1);
    double prev = 0.0;
    bool have_prev = false;
    for (size_t s = 0; s < log.rows.size(); ++s) {
        const AgentSample& a = log.rows[s][idx];
        const double v = a.phi + 0.5 * a.w.squaredNorm() + audit.k_v * a.e_dot_w;
        if (have_prev) {
            const double jump = v - prev;
            // Samples at equilibrium carry only rounding noise; skip them.
            const bool at_equilibrium = a.err_frob < 1e-5 && a.w.norm() < 1e-5;
            if (!at_equilibrium) {
                ++audit.considered;
                audit.max_positive_jump = std::max(audit.max_positive_jump, jump);
                if (jump > tolerance) {
                    ++audit.violations;
                }
            }
        }
        prev = v;
        have_prev = true;
    }
    audit.violation_fraction =
        audit.considered > 0 ? static_cast<double>(audit.violations) / audit.considered : 0.0;
    return audit;
}

std::pair<Scenario, double> apply_gain_design(const Scenario& scenario, double target_spread) {
    Scenario out = scenario;
    const Simulator sim(scenario);
    const auto sets = measure_all(scenario, sim.initial_state().states);
    double worst = 0.0;
    for (int i = 3; i <= scenario.n(); ++i) {
        const GainDesign d =
            design_gains_search(sets[static_cast<size_t>(i - 1)], target_spread);
        for (const auto& [target, value] : d.fragment) {
            out.gains.set(i, target, value);
        }
        worst = std::max(worst, d.achieved_spread);
    }
    return {out, worst};
}

std::vector<IssCell> iss_gain_experiment(const Scenario& scenario,
                                         std::span<const double> spread_values,
                                         std::span<const double> gain_scales, int trials,
                                         std::uint64_t seed) {
    std::vector<IssCell> cells;
    for (const double spread : spread_values) {
        auto [designed, achieved] = apply_gain_design(scenario, spread);
        for (const double scale : gain_scales) {
            Scenario cell_scenario = designed;
            for (auto& [key, value] : cell_scenario.gains.k) {
                value *= scale;
            }
            const Simulator sim(cell_scenario);
            const MonteCarloSummary mc =
                sim.monte_carlo(trials, seed, cell_scenario.integration.t_end);
            IssCell cell;
            cell.target_spread = spread;
            cell.achieved_spread = achieved;
            cell.gain_scale = scale;
            cell.trials = trials;
            cell.convergence_fraction = mc.convergence_fraction();
            cell.mean_convergence_time = mc.mean_convergence_time();
            cells.push_back(cell);
        }
    }
    return cells;
}

namespace {

nlohmann::ordered_json matrix_json(const Matrix3& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int r = 0; r < 3; ++r) {
        rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
    }
    return rows;
}

}  // namespace

nlohmann::ordered_json to_json(const ConvergenceReport& report) {
    nlohmann::ordered_json j;
    j["threshold"] = report.threshold;
    j["scenario_digest"] = report.scenario_digest;
    j["agents"] = nlohmann::ordered_json::array();
    for (const auto& a : report.agents) {
        nlohmann::ordered_json ja;
        ja["agent"] = a.agent;
        ja["converged"] = a.converged;
        ja["time_to_threshold"] = a.time_to_threshold;
        if (a.rate.has_value()) {
            ja["rate"] = *a.rate;
            ja["r_squared"] = *a.r_squared;
        } else {
            ja["rate"] = nullptr;
            ja["r_squared"] = nullptr;
        }
        ja["terminal_error"] = a.terminal_error;
        j["agents"].push_back(ja);
    }
    return j;
}

nlohmann::ordered_json to_json(const EquilibriumReport& report) {
    nlohmann::ordered_json j;
    j["agent"] = report.agent;
    j["eigenvalues"] = {report.eigenvalues(0), report.eigenvalues(1), report.eigenvalues(2)};
    j["points"] = nlohmann::ordered_json::array();
    for (const auto& p : report.points) {
        nlohmann::ordered_json jp;
        jp["classification"] = to_string(p.classification);
        jp["phi"] = p.phi_value;
        jp["residual"] = p.residual;
        jp["perturbations"] = p.perturbations;
        jp["escapes"] = p.escapes;
        jp["converged"] = p.converged;
        jp["max_escape_time"] = p.max_escape_time;
        jp["max_convergence_time"] = p.max_convergence_time;
        jp["point"] = matrix_json(p.point);
        j["points"].push_back(jp);
    }
    return j;
}

nlohmann::ordered_json to_json(const MonteCarloSummary& summary) {
    nlohmann::ordered_json j;
    j["trials"] = summary.trials;
    j["seed"] = summary.seed;
    j["t_end"] = summary.t_end;
    j["threshold"] = summary.threshold;
    j["converged"] = summary.converged;
    j["convergence_fraction"] = summary.convergence_fraction();
    j["mean_convergence_time"] = summary.mean_convergence_time();
    j["max_convergence_time"] = summary.max_convergence_time();
    j["failures"] = nlohmann::ordered_json::array();
    for (const auto& r : summary.results) {
        if (!r.converged) {
            j["failures"].push_back({{"trial", r.trial},
                                     {"final_max_error", r.final_max_error},
                                     {"min_initial_critical_distance",
                                      r.min_initial_critical_distance}});
        }
    }
    return j;
}

nlohmann::ordered_json to_json(std::span<const IssCell> cells) {
    nlohmann::ordered_json j;
    j["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : cells) {
        j["cells"].push_back({{"target_spread", c.target_spread},
                              {"achieved_spread", c.achieved_spread},
                              {"gain_scale", c.gain_scale},
                              {"trials", c.trials},
                              {"convergence_fraction", c.convergence_fraction},
                              {"mean_convergence_time", c.mean_convergence_time}});
    }
    return j;
}

}  // namespace bearing_align
