#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bearing_align/scenario.hpp"
#include "bearing_align/sensing.hpp"
#include "bearing_align/types.hpp"

namespace bearing_align {

struct ErrorVector {
    int agent = 0;
    Vector3 e = Vector3::Zero();
};

/// Gain-weighted sum of outer products of global-frame directions, with its
/// eigen-decomposition attached. Eigenvalues ascending; eigenvector column
/// signs fixed so critical points are reproducible.
struct KMatrix {
    int agent = 0;
    Matrix3 k = Matrix3::Zero();
    Vector3 eigenvalues = Vector3::Zero();
    Matrix3 eigenvectors = Matrix3::Identity();
    bool positive_definite = false;
    bool degenerate_spectrum = false;  // any eigenvalue gap below 1e-9
};

/// e_2 = k_21 (b_12^1 x b_21^2) + sum_l k_2l (b_1n_l^1 x b_2n_l^2), plus the
/// completed-direction term in single/none landmark mode. Agent 2 consumes
/// agent 1's body-frame vectors as communicated data.
ErrorVector error_vector_agent2(const MeasurementSet& m1, const MeasurementSet& m2,
                                const GainTable& gains);

/// e_i = sum_{j in N_i} k_ij (b_ji^j x b_ij^i) for a follower i with
/// neighbor messages b_ji^j; the virtual-neighbor term pairs the negated
/// normalized cross product of the two messages with the agent's own
/// virtual direction.
ErrorVector error_vector_follower(int agent, const MeasurementSet& own,
                                  const std::map<int, UnitVector3>& neighbor_msgs,
                                  const GainTable& gains);

/// Error function of agent 2, Phi_2 = sum k (1 + ref . own) over the
/// measured pairs; zero exactly at alignment.
double error_function_agent2(const MeasurementSet& m1, const MeasurementSet& m2,
                             const GainTable& gains);

/// Error function of a follower against leader-frame references.
double error_function_follower(int agent, const MeasurementSet& own,
                               const std::map<int, UnitVector3>& references,
                               const GainTable& gains);

/// Builds K from global directions and attaches the spectral data.
KMatrix k_matrix(int agent, std::span<const std::pair<Vector3, double>> directions);

/// K matrix of an agent's alignment law assembled from the scenario's
/// global geometry (agent 2: pair bearing plus landmark normals and, in
/// single/none mode, the completed direction; followers: two neighbor
/// bearings plus the virtual direction).
KMatrix agent_k_matrix(int agent, const Scenario& s);
KMatrix agent_k_matrix(int agent, const Scenario& s, const GeometryTables& tables);

/// K as the agent itself can assemble it, from its own body-frame
/// measurements; similar to the global K, so the spectra coincide and the
/// agent can evaluate (and shape) the spectrum locally.
KMatrix local_k_matrix(const MeasurementSet& own, const GainTable& gains);

struct GainDesign {
    std::map<std::string, double> fragment;  // target -> gain, for one agent
    double achieved_spread = 0.0;            // lambda_max/lambda_min - 1
    bool ok = false;
};

/// Best gains found by a 1-D search over the two real-neighbor gains with
/// the virtual gain fixed at 1.
GainDesign design_gains_search(const MeasurementSet& own, double target_spread);

/// As design_gains_search, but throws SearchFailedError when the target
/// spread is unreachable for the agent's geometry.
GainDesign design_gains(const MeasurementSet& own, double target_spread);

/// Angular acceleration -k_omega w - e.
Vector3 control_update(const Vector3& w, const ErrorVector& e, double k_omega);

/// The four isolated critical points {I, U D_1 U^T, U D_2 U^T, U D_3 U^T},
/// D_i = 2 [I]_i [I]_i^T - I. Requires a distinct spectrum.
std::array<Rotation, 4> critical_points(const KMatrix& k);

enum class CriticalPointType { minimum, maximum, saddle };

std::string to_string(CriticalPointType type);

/// Classification aligned with critical_points(): identity is the global
/// minimum; the flip about the smallest-eigenvalue axis (largest value
/// 2(lambda_j + lambda_k)) is the maximum; the other two are saddles.
std::array<CriticalPointType, 4> classify_critical_points(const KMatrix& k);

/// V = Phi + 0.5 ||w||^2 + k_V (e . w).
double lyapunov_value(double phi, const Vector3& w, const Vector3& e, double k_v);

struct GainBounds {
    double k_v_max_positivity = 0.0;  // sqrt(sigma), sigma sampled empirically
    double k_v_max_decrease = 0.0;    // 4 k_omega / (4 k_tot + k_omega^2)
};

GainBounds gain_bounds(const KMatrix& k, double k_omega);

/// Error function and error-vector norm of the unforced system as algebraic
/// functions of Q = R_i R_1^T and K: Phi = tr(K) - tr(Q K) and
/// e = -R_1^T vee(Q^T K - K Q). Used by gain_bounds sampling and as an
/// independent route in tests.
double phi_from_k(const Matrix3& q_tilde, const Matrix3& k);
Vector3 error_from_k(const Matrix3& q_tilde, const Matrix3& k);

/// Per-agent control evaluation used by the simulator: the actual error e
/// driving the law, the unforced error (leader-frame references), and Phi.
/// For agent 2 the two errors coincide. The leader returns zeros.
struct AgentEval {
    Vector3 e = Vector3::Zero();
    Vector3 e_unforced = Vector3::Zero();
    double phi = 0.0;
};

AgentEval evaluate_agent(int agent, const std::vector<MeasurementSet>& sets,
                         const GeometryTables& tables, const Matrix3& r1,
                         const GainTable& gains);

}  // namespace bearing_align
