// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exits nonzero if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bearing_align/analysis.hpp"
#include "bearing_align/scenario.hpp"
#include "bearing_align/simulator.hpp"
#include "bearing_align/so3.hpp"

using namespace bearing_align;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Criterion {
    int number;
    std::string title;
    std::function<bool(std::string&)> check;
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector3 random_vector(std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return Vector3(u(rng), u(rng), u(rng));
}

Matrix3 exp_series(const Vector3& w, int terms) {
    const Matrix3 k = hat(w);
    Matrix3 sum = Matrix3::Identity();
    Matrix3 power = Matrix3::Identity();
    double factorial = 1.0;
    for (int n = 1; n <= terms; ++n) {
        power = power * k;
        factorial *= n;
        sum += power / factorial;
    }
    return sum;
}

SystemState state_from_row(const Scenario& s, const std::vector<AgentSample>& row, double t) {
    SystemState st;
    st.t = t;
    for (int i = 0; i < s.n(); ++i) {
        AgentState a;
        a.R = Rotation::from_matrix_unchecked(row[static_cast<size_t>(i)].r);
        a.w = row[static_cast<size_t>(i)].w;
        st.states.push_back(a);
    }
    return st;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main() {
    const Scenario scenario = default_scenario();
    const Simulator sim(scenario);

    // The reference run is shared by several criteria.
    const auto run_start = std::chrono::steady_clock::now();
    const TrajectoryLog log = sim.run();
    const double run_seconds = seconds_since(run_start);

    std::vector<Criterion> criteria;

    criteria.push_back({1, "eight-agent reproduction converges below 1e-6 by 30 s",
                        [&](std::string& detail) {
                            double worst = 0.0;
                            for (const auto& a : log.rows.back()) {
                                worst = std::max(worst, a.err_frob);
                            }
                            char buf[128];
                            std::snprintf(buf, sizeof(buf),
                                          "worst terminal error %.2e, wall time %.2f s", worst,
                                          run_seconds);
                            detail = buf;
                            return worst < 1e-6 && run_seconds < 10.0;
                        }});

    criteria.push_back({2, "SO(3) identity suite within 1e-12 over 1000 draws", [&](std::string&
                                                                                        detail) {
                            const auto t0 = std::chrono::steady_clock::now();
                            std::mt19937_64 rng(101);
                            double worst = 0.0;
                            for (int i = 0; i < 1000; ++i) {
                                const Vector3 x = random_vector(rng, 1.0);
                                const Vector3 y = random_vector(rng, 1.0);
                                const Vector3 z = random_vector(rng, 1.0);
                                const Rotation r = sample_uniform_rotation(rng);
                                const auto track = [&worst](double v) {
                                    worst = std::max(worst, v);
                                };
                                track((x.cross(y) + y.cross(x)).norm());
                                track(((r * x).cross(r * y) - r * x.cross(y)).norm());
                                track((r.matrix() * hat(x) * r.matrix().transpose() -
                                       hat(r * x))
                                          .norm());
                                track((hat(x.cross(y)) -
                                       (hat(x) * hat(y) - hat(y) * hat(x)))
                                          .norm());
                                track((hat(x.cross(y)) -
                                       (y * x.transpose() - x * y.transpose()))
                                          .norm());
                                track(std::abs(x.dot(hat(y) * z) - z.dot(hat(x) * y)));
                                track(std::abs(x.dot(hat(y) * z) - y.dot(hat(z) * x)));
                                track((x.cross(y.cross(z)) + y.cross(z.cross(x)) +
                                       z.cross(x.cross(y)))
                                          .norm());
                                track(std::abs(x.dot(y) - (x * y.transpose()).trace()));
                                track((vee(hat(x)) - x).norm());
                                track((exp_so3(x).matrix() - exp_series(x, 20))
                                          .cwiseAbs()
                                          .maxCoeff());
                            }
                            const double elapsed = seconds_since(t0);
                            char buf[128];
                            std::snprintf(buf, sizeof(buf), "worst residual %.2e in %.2f s",
                                          worst, elapsed);
                            detail = buf;
                            return worst < 1e-12 && elapsed < 1.0;
                        }});

    criteria.push_back(
        {3, "K2 positive definite with distinct spectrum for random gains",
         [&](std::string& detail) {
             std::mt19937_64 rng(102);
             std::uniform_real_distribution<double> u(0.5, 2.0);
             int distinct = 0;
             bool all_pd = true;
             for (int t = 0; t < 1000; ++t) {
                 Scenario s = scenario;
                 for (auto& [key, value] : s.gains.k) value = u(rng);
                 const KMatrix k = agent_k_matrix(2, s);
                 all_pd = all_pd && k.positive_definite;
                 if (!k.degenerate_spectrum) ++distinct;
             }
             detail = "distinct spectra in " + std::to_string(distinct) + "/1000 draws";
             return all_pd && distinct >= 999;
         }});

    criteria.push_back(
        {4, "gradient identity dPhi/dt = e.w within 1e-3 relative at h = 1e-6",
         [&](std::string& detail) {
             // Dense sampling of the same trajectory: the quotient needs a
             // healthy slope, so the oscillation's turning points (where
             // e.w passes through zero) are excluded relative to each
             // agent's own activity scale.
             RunOptions options;
             options.t_end = scenario.integration.t_end;
             options.stride = 10;
             const TrajectoryLog dense = sim.run(sim.initial_state(), options);

             const double h = 1e-6;
             double worst = 0.0;
             int total = 0;
             std::mt19937_64 rng(103);
             for (int agent = 2; agent <= scenario.n(); ++agent) {
                 double activity = 0.0;
                 for (const auto& row : dense.rows) {
                     activity = std::max(
                         activity, std::abs(row[static_cast<size_t>(agent - 1)].e_dot_w));
                 }
                 std::vector<size_t> usable;
                 for (size_t s = 0; s < dense.rows.size(); ++s) {
                     if (std::abs(dense.rows[s][static_cast<size_t>(agent - 1)].e_dot_w) >
                         1e-4 * activity) {
                         usable.push_back(s);
                     }
                 }
                 if (usable.size() < 100) {
                     detail = "agent " + std::to_string(agent) + " has only " +
                              std::to_string(usable.size()) + " active samples";
                     return false;
                 }
                 std::shuffle(usable.begin(), usable.end(), rng);
                 usable.resize(100);
                 for (const size_t idx : usable) {
                     const SystemState st =
                         state_from_row(scenario, dense.rows[idx], dense.times[idx]);
                     const double phi0 = sim.evaluate(st, agent).phi;
                     const double predicted =
                         dense.rows[idx][static_cast<size_t>(agent - 1)].e_dot_w;
                     const SystemState advanced = sim.step(st, h);
                     const double phi1 = sim.evaluate(advanced, agent).phi;
                     const double rel =
                         std::abs((phi1 - phi0) / h - predicted) / std::abs(predicted);
                     worst = std::max(worst, rel);
                     ++total;
                 }
             }
             char buf[128];
             std::snprintf(buf, sizeof(buf), "worst relative error %.2e over %d samples", worst,
                           total);
             detail = buf;
             return worst < 1e-3;
         }});

    criteria.push_back(
        {5, "four critical points: zero error, Phi = 2(li+lj), Hessian signs",
         [&](std::string& detail) {
             std::mt19937_64 rng(104);
             std::normal_distribution<double> g(0.0, 1.0);
             double worst_residual = 0.0, worst_phi = 0.0;
             for (int agent : {2, 5}) {
                 const KMatrix k = agent_k_matrix(agent, scenario);
                 const auto points = critical_points(k);
                 const auto labels = classify_critical_points(k);
                 const Vector3& lam = k.eigenvalues;
                 const std::array<double, 4> expected = {0.0, 2.0 * (lam(1) + lam(2)),
                                                         2.0 * (lam(0) + lam(2)),
                                                         2.0 * (lam(0) + lam(1))};
                 for (size_t p = 0; p < 4; ++p) {
                     SystemState st;
                     st.states.assign(static_cast<size_t>(scenario.n()),
                                      AgentState{scenario.agent(1).initial_orientation,
                                                 Vector3::Zero()});
                     st.states[static_cast<size_t>(agent - 1)].R =
                         Rotation::from_matrix_unchecked(
                             points[p].matrix() *
                             scenario.agent(1).initial_orientation.matrix());
                     const AgentEval ev = sim.evaluate(st, agent);
                     worst_residual = std::max(worst_residual, ev.e.norm());
                     worst_phi = std::max(worst_phi, std::abs(ev.phi - expected[p]));

                     int ups = 0, downs = 0;
                     for (int t = 0; t < 100; ++t) {
                         Vector3 eta(g(rng), g(rng), g(rng));
                         eta = 1e-3 * eta.normalized();
                         const double diff =
                             phi_from_k(points[p].matrix() * exp_so3(eta).matrix(), k.k) -
                             phi_from_k(points[p].matrix(), k.k);
                         if (diff > 1e-9) ++ups;
                         if (diff < -1e-9) ++downs;
                     }
                     const bool sign_ok =
                         (labels[p] == CriticalPointType::minimum && ups == 100 && downs == 0) ||
                         (labels[p] == CriticalPointType::maximum && downs == 100 && ups == 0) ||
                         (labels[p] == CriticalPointType::saddle && ups > 0 && downs > 0);
                     if (!sign_ok) {
                         detail = "Hessian signs disagree with the classification";
                         return false;
                     }
                 }
             }
             char buf[128];
             std::snprintf(buf, sizeof(buf), "max residual %.2e, max Phi deviation %.2e",
                           worst_residual, worst_phi);
             detail = buf;
             return worst_residual < 1e-8 && worst_phi < 1e-10;
         }});

    criteria.push_back(
        {6, "20/20 perturbations escape each undesired equilibrium within 20 s",
         [&](std::string& detail) {
             const EquilibriumReport rep = equilibrium_probe(2, scenario, 1e-3, 20, 20.0, 2024);
             bool ok = true;
             double worst_escape = 0.0, worst_conv = 0.0;
             for (size_t p = 1; p < 4; ++p) {
                 const auto& point = rep.points[p];
                 ok = ok && point.escapes == 20 && point.converged == 20;
                 worst_escape = std::max(worst_escape, point.max_escape_time);
                 worst_conv = std::max(worst_conv, point.max_convergence_time);
             }
             char buf[128];
             std::snprintf(buf, sizeof(buf),
                           "slowest escape %.1f s, slowest basin entry %.1f s", worst_escape,
                           worst_conv);
             detail = buf;
             return ok && worst_escape <= 20.0 && worst_conv <= 20.0;
         }});

    criteria.push_back(
        {7, "at least 99/100 random orientations converge below 1e-6 by 60 s",
         [&](std::string& detail) {
             const MonteCarloSummary mc = sim.monte_carlo(100, 42, 60.0);
             bool failures_near_manifold = true;
             for (const auto& r : mc.results) {
                 if (!r.converged) {
                     std::printf("    trial %d failed: final error %.2e, distance to nearest "
                                 "unstable point %.2e\n",
                                 r.trial, r.final_max_error, r.min_initial_critical_distance);
                     failures_near_manifold =
                         failures_near_manifold && r.min_initial_critical_distance < 1e-6;
                 }
             }
             char buf[128];
             std::snprintf(buf, sizeof(buf), "%d/100 converged, slowest %.1f s", mc.converged,
                           mc.max_convergence_time());
             detail = buf;
             return mc.converged >= 99 && failures_near_manifold;
         }});

    criteria.push_back(
        {8, "exponential tail fit with R^2 > 0.95 for every agent", [&](std::string& detail) {
             const ConvergenceReport rep = convergence_analysis(log, 1e-6);
             double worst_r2 = 1.0;
             for (const auto& a : rep.agents) {
                 if (!a.converged) {
                     detail = "agent " + std::to_string(a.agent) + " did not converge";
                     return false;
                 }
                 if (a.agent == 1) continue;  // the leader has no decay to fit
                 if (!a.rate.has_value() || *a.rate <= 0.0) {
                     detail = "agent " + std::to_string(a.agent) + " has no fitted rate";
                     return false;
                 }
                 worst_r2 = std::min(worst_r2, *a.r_squared);
             }
             char buf[128];
             std::snprintf(buf, sizeof(buf), "worst follower R^2 = %.4f", worst_r2);
             detail = buf;
             return worst_r2 > 0.95;
         }});

    criteria.push_back({9, "cascade inputs vanish: ||h_i(t_end)|| < 1e-8 for all followers",
                        [&](std::string& detail) {
                            double worst = 0.0;
                            for (int i = 3; i <= scenario.n(); ++i) {
                                worst = std::max(
                                    worst, log.rows.back()[static_cast<size_t>(i - 1)].h_norm);
                            }
                            char buf[64];
                            std::snprintf(buf, sizeof(buf), "worst ||h|| = %.2e", worst);
                            detail = buf;
                            return worst < 1e-8;
                        }});

    criteria.push_back(
        {10, "fourth-order local error scaling (ratio in [12, 20])", [&](std::string& detail) {
             const auto integrate = [&](double dt) {
                 SystemState st = sim.initial_state();
                 const long steps = std::lround(5.0 / dt);
                 for (long k = 0; k < steps; ++k) st = sim.step(st, dt);
                 return st;
             };
             const SystemState ref = integrate(0.00125);
             const auto distance = [](const SystemState& a, const SystemState& b) {
                 double d = 0.0;
                 for (size_t i = 0; i < a.states.size(); ++i) {
                     d += (a.states[i].R.matrix() - b.states[i].R.matrix()).norm() +
                          (a.states[i].w - b.states[i].w).norm();
                 }
                 return d;
             };
             const double ratio = distance(integrate(0.02), ref) / distance(integrate(0.01), ref);
             char buf[64];
             std::snprintf(buf, sizeof(buf), "halving ratio %.1f", ratio);
             detail = buf;
             return ratio >= 12.0 && ratio <= 20.0;
         }});

    criteria.push_back(
        {11, "single- and no-landmark fallbacks converge below 1e-6 by 30 s",
         [&](std::string& detail) {
             double worst = 0.0;
             for (const LandmarkMode mode : {LandmarkMode::single, LandmarkMode::none}) {
                 Scenario s = scenario;
                 s.landmark_mode = mode;
                 const Simulator fallback(s);
                 const TrajectoryLog fl = fallback.run();
                 for (const auto& a : fl.rows.back()) {
                     worst = std::max(worst, a.err_frob);
                 }
             }
             char buf[64];
             std::snprintf(buf, sizeof(buf), "worst terminal error %.2e", worst);
             detail = buf;
             return worst < 1e-6;
         }});

    criteria.push_back(
        {12, "identical config and seed give byte-identical outputs", [&](std::string& detail) {
             const fs::path base =
                 fs::temp_directory_path() / ("ba_accept_" + std::to_string(::getpid()));
             const fs::path dir_a = base / "a";
             const fs::path dir_b = base / "b";
             fs::create_directories(dir_a);
             fs::create_directories(dir_b);
             const std::string cli = BA_CLI_PATH;
             const auto invoke = [&cli](const fs::path& out) {
                 const std::string cmd = cli + " run --t-end 2.0 --seed 9 --out " +
                                         out.string() + " > /dev/null 2>&1";
                 return std::system(cmd.c_str());
             };
             const int rc_a = invoke(dir_a);
             const int rc_b = invoke(dir_b);
             const bool same_csv =
                 read_file(dir_a / "trajectory.csv") == read_file(dir_b / "trajectory.csv");
             const bool same_json =
                 read_file(dir_a / "convergence.json") == read_file(dir_b / "convergence.json");
             fs::remove_all(base);
             detail = std::string("CSV ") + (same_csv ? "identical" : "differs") + ", JSON " +
                      (same_json ? "identical" : "differs");
             return rc_a == 0 && rc_b == 0 && same_csv && same_json;
         }});

    int failed = 0;
    for (const auto& c : criteria) {
        std::string detail;
        bool ok = false;
        try {
            ok = c.check(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", c.number,
                    c.title.c_str(), detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failed;
    }
    if (failed > 0) {
        std::printf("%d of %zu criteria failed\n", failed, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
