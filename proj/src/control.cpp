#include "bearing_align/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "bearing_align/so3.hpp"

namespace bearing_align {

namespace {

constexpr double kSpectrumGapTol = 1e-9;
constexpr double kDegenerateCrossTol = 1e-6;

// Neighbor-side (reference) vector comes first in every error term.
Vector3 pair_error(const Vector3& ref, const Vector3& own) { return ref.cross(own); }
double pair_phi(const Vector3& ref, const Vector3& own) { return 1.0 + ref.dot(own); }

// Negated normalized cross of the two communicated directions: the
// reciprocal of the agent's own virtual direction, anti-parallel to it once
// the senders are aligned. During large transients the two raw coordinate
// triples can momentarily align, leaving no usable third direction; the
// caller then drops the virtual term for that instant.
std::optional<Vector3> received_virtual(const Vector3& msg_j, const Vector3& msg_k) {
    const Vector3 c = msg_j.cross(msg_k);
    const double n = c.norm();
    if (n <= kDegenerateCrossTol) {
        return std::nullopt;
    }
    return -c / n;
}

}  // namespace

ErrorVector error_vector_agent2(const MeasurementSet& m1, const MeasurementSet& m2,
                                const GainTable& gains) {
    ErrorVector out;
    out.agent = 2;
    out.e = gains.gain(2, "1") * pair_error(m1.bearing_to(2).vec(), m2.bearing_to(1).vec());
    for (const auto& [key, own_normal] : m2.normals) {
        out.e += gains.gain(2, key) * pair_error(m1.normal_for(key).vec(), own_normal.vec());
    }
    if (m2.virtual_direction.has_value()) {
        if (!m1.virtual_direction.has_value()) {
            throw MissingMeasurementError("agent 1 did not communicate its completed direction");
        }
        out.e += gains.gain(2, "virtual") * pair_error(-m1.virtual_direction->vec(),
                                                       m2.virtual_direction->vec());
    }
    return out;
}

double error_function_agent2(const MeasurementSet& m1, const MeasurementSet& m2,
                             const GainTable& gains) {
    double phi = gains.gain(2, "1") * pair_phi(m1.bearing_to(2).vec(), m2.bearing_to(1).vec());
    for (const auto& [key, own_normal] : m2.normals) {
        phi += gains.gain(2, key) * pair_phi(m1.normal_for(key).vec(), own_normal.vec());
    }
    if (m2.virtual_direction.has_value()) {
        if (!m1.virtual_direction.has_value()) {
            throw MissingMeasurementError("agent 1 did not communicate its completed direction");
        }
        phi += gains.gain(2, "virtual") *
               pair_phi(-m1.virtual_direction->vec(), m2.virtual_direction->vec());
    }
    return phi;
}

ErrorVector error_vector_follower(int agent, const MeasurementSet& own,
                                  const std::map<int, UnitVector3>& neighbor_msgs,
                                  const GainTable& gains) {
    if (own.control_neighbors.size() != 2) {
        throw MissingMeasurementError("follower " + std::to_string(agent) +
                                      " needs exactly two neighbors");
    }
    const int j = own.control_neighbors[0];
    const int k = own.control_neighbors[1];
    const auto msg = [&neighbor_msgs, agent](int id) -> const UnitVector3& {
        const auto it = neighbor_msgs.find(id);
        if (it == neighbor_msgs.end()) {
            throw MissingMeasurementError("agent " + std::to_string(agent) +
                                          ": missing message from neighbor " + std::to_string(id));
        }
        return it->second;
    };
    if (!own.virtual_direction.has_value()) {
        throw MissingMeasurementError("agent " + std::to_string(agent) +
                                      ": missing virtual direction");
    }
    ErrorVector out;
    out.agent = agent;
    out.e = gains.gain(agent, std::to_string(j)) *
                pair_error(msg(j).vec(), own.bearing_to(j).vec()) +
            gains.gain(agent, std::to_string(k)) *
                pair_error(msg(k).vec(), own.bearing_to(k).vec());
    if (const auto ref_v = received_virtual(msg(j).vec(), msg(k).vec())) {
        out.e += gains.gain(agent, "virtual") * pair_error(*ref_v, own.virtual_direction->vec());
    }
    return out;
}

double error_function_follower(int agent, const MeasurementSet& own,
                               const std::map<int, UnitVector3>& references,
                               const GainTable& gains) {
    if (own.control_neighbors.size() != 2 || !own.virtual_direction.has_value()) {
        throw MissingMeasurementError("follower " + std::to_string(agent) +
                                      " measurement set incomplete");
    }
    const int j = own.control_neighbors[0];
    const int k = own.control_neighbors[1];
    const auto ref = [&references, agent](int id) -> const UnitVector3& {
        const auto it = references.find(id);
        if (it == references.end()) {
            throw MissingMeasurementError("agent " + std::to_string(agent) +
                                          ": missing reference for neighbor " + std::to_string(id));
        }
        return it->second;
    };
    const auto ref_v = received_virtual(ref(j).vec(), ref(k).vec());
    if (!ref_v.has_value()) {
        throw DegenerateCrossError("error_function_follower: references are nearly collinear");
    }
    return gains.gain(agent, std::to_string(j)) * pair_phi(ref(j).vec(), own.bearing_to(j).vec()) +
           gains.gain(agent, std::to_string(k)) * pair_phi(ref(k).vec(), own.bearing_to(k).vec()) +
           gains.gain(agent, "virtual") * pair_phi(*ref_v, own.virtual_direction->vec());
}

KMatrix k_matrix(int agent, std::span<const std::pair<Vector3, double>> directions) {
    KMatrix out;
    out.agent = agent;
    for (const auto& [b, gain] : directions) {
        out.k += gain * b * b.transpose();
    }
    const SymEigen3 eig = sym_eigen3(out.k);
    out.eigenvalues = eig.values;
    out.eigenvectors = eig.vectors;
    const double scale = std::max(std::abs(eig.values(2)), 1.0);
    out.positive_definite = eig.values(0) > 1e-12 * scale;
    out.degenerate_spectrum = (eig.values(1) - eig.values(0) < kSpectrumGapTol) ||
                              (eig.values(2) - eig.values(1) < kSpectrumGapTol);
    return out;
}

namespace {

std::vector<std::pair<Vector3, double>> global_directions(int agent, const Scenario& s,
                                                          const GeometryTables& tables) {
    std::vector<std::pair<Vector3, double>> dirs;
    if (agent == 2) {
        const Vector3 d = s.agent(1).position - s.agent(2).position;
        dirs.emplace_back(d / d.norm(), s.gains.gain(2, "1"));
        for (const auto& [key, normal] : tables.normals_global[1]) {
            dirs.emplace_back(normal, s.gains.gain(2, key));
        }
        if (tables.pair_virtual_global[1].has_value()) {
            dirs.emplace_back(*tables.pair_virtual_global[1], s.gains.gain(2, "virtual"));
        }
    } else if (agent >= 3 && agent <= s.n()) {
        for (int j : tables.control_neighbors[static_cast<size_t>(agent - 1)]) {
            const Vector3 d = s.agent(j).position - s.agent(agent).position;
            dirs.emplace_back(d / d.norm(), s.gains.gain(agent, std::to_string(j)));
        }
        dirs.emplace_back(*tables.follower_virtual[static_cast<size_t>(agent - 1)],
                          s.gains.gain(agent, "virtual"));
    } else {
        throw Error("agent_k_matrix: agent " + std::to_string(agent) + " has no alignment law");
    }
    return dirs;
}

}  // namespace

KMatrix agent_k_matrix(int agent, const Scenario& s, const GeometryTables& tables) {
    const auto dirs = global_directions(agent, s, tables);
    return k_matrix(agent, dirs);
}

KMatrix agent_k_matrix(int agent, const Scenario& s) {
    return agent_k_matrix(agent, s, GeometryTables::build(s));
}

KMatrix local_k_matrix(const MeasurementSet& own, const GainTable& gains) {
    std::vector<std::pair<Vector3, double>> dirs;
    if (own.owner == 2) {
        dirs.emplace_back(own.bearing_to(1).vec(), gains.gain(2, "1"));
        for (const auto& [key, normal] : own.normals) {
            dirs.emplace_back(normal.vec(), gains.gain(2, key));
        }
        if (own.virtual_direction.has_value()) {
            dirs.emplace_back(own.virtual_direction->vec(), gains.gain(2, "virtual"));
        }
    } else if (own.owner >= 3) {
        for (int j : own.control_neighbors) {
            dirs.emplace_back(own.bearing_to(j).vec(), gains.gain(own.owner, std::to_string(j)));
        }
        if (!own.virtual_direction.has_value()) {
            throw MissingMeasurementError("local_k_matrix: missing virtual direction");
        }
        dirs.emplace_back(own.virtual_direction->vec(), gains.gain(own.owner, "virtual"));
    } else {
        throw Error("local_k_matrix: the leader has no alignment law");
    }
    return k_matrix(own.owner, dirs);
}

GainDesign design_gains_search(const MeasurementSet& own, double target_spread) {
    if (own.owner < 3) {
        throw Error("design_gains: only followers carry the local gain design");
    }
    if (own.control_neighbors.size() != 2 || !own.virtual_direction.has_value()) {
        throw MissingMeasurementError("design_gains: measurement set incomplete");
    }
    const int j = own.control_neighbors[0];
    const int k = own.control_neighbors[1];
    const Vector3 bj = own.bearing_to(j).vec();
    const Vector3 bk = own.bearing_to(k).vec();
    const Vector3 bv = own.virtual_direction->vec();
    const double k_virtual = 1.0;

    const auto spread_at = [&](double g) {
        std::array<std::pair<Vector3, double>, 3> dirs = {
            std::make_pair(bj, g), std::make_pair(bk, g), std::make_pair(bv, k_virtual)};
        const KMatrix km = k_matrix(own.owner, dirs);
        return km.eigenvalues(2) / km.eigenvalues(0) - 1.0;
    };

    // Coarse log sweep of the shared neighbor gain, then golden-section
    // refinement around the best cell.
    double best_g = 1.0;
    double best_spread = spread_at(1.0);
    for (int i = 0; i <= 160; ++i) {
        const double g = std::pow(10.0, -2.0 + 4.0 * i / 160.0);
        const double sp = spread_at(g);
        if (sp < best_spread) {
            best_spread = sp;
            best_g = g;
        }
    }
    double lo = best_g / 1.2, hi = best_g * 1.2;
    const double ratio = 0.6180339887498949;
    double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
    double f1 = spread_at(x1), f2 = spread_at(x2);
    for (int it = 0; it < 80; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = spread_at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = spread_at(x2);
        }
    }
    if (f1 < best_spread) {
        best_spread = f1;
        best_g = x1;
    }
    if (f2 < best_spread) {
        best_spread = f2;
        best_g = x2;
    }

    GainDesign out;
    out.fragment = {{std::to_string(j), best_g}, {std::to_string(k), best_g},
                    {"virtual", k_virtual}};
    out.achieved_spread = best_spread;
    out.ok = best_spread <= target_spread;
    return out;
}

GainDesign design_gains(const MeasurementSet& own, double target_spread) {
    GainDesign d = design_gains_search(own, target_spread);
    if (!d.ok) {
        throw SearchFailedError("design_gains: best achievable spread " +
                                std::to_string(d.achieved_spread) + " exceeds target " +
                                std::to_string(target_spread));
    }
    return d;
}

Vector3 control_update(const Vector3& w, const ErrorVector& e, double k_omega) {
    if (k_omega <= 0.0) {
        throw Error("control_update: k_omega must be positive");
    }
    return -k_omega * w - e.e;
}

std::array<Rotation, 4> critical_points(const KMatrix& k) {
    if (k.degenerate_spectrum) {
        throw DegenerateSpectrumError("critical_points: eigenvalue gap below 1e-9");
    }
    const Matrix3& u = k.eigenvectors;
    std::array<Rotation, 4> points;
    points[0] = Rotation::identity();
    for (int i = 0; i < 3; ++i) {
        Matrix3 d = -Matrix3::Identity();
        d(i, i) = 1.0;
        points[static_cast<size_t>(i + 1)] = Rotation::from_matrix(u * d * u.transpose());
    }
    return points;
}

std::string to_string(CriticalPointType type) {
    switch (type) {
        case CriticalPointType::minimum: return "minimum";
        case CriticalPointType::maximum: return "maximum";
        case CriticalPointType::saddle: return "saddle";
    }
    return "saddle";
}

std::array<CriticalPointType, 4> classify_critical_points(const KMatrix& k) {
    if (k.degenerate_spectrum) {
        throw DegenerateSpectrumError("classify_critical_points: eigenvalue gap below 1e-9");
    }
    // Phi at the flip about eigen-axis i is 2 (lambda_j + lambda_k), j,k != i;
    // with ascending eigenvalues the flip about axis 0 has the largest value.
    return {CriticalPointType::minimum, CriticalPointType::maximum, CriticalPointType::saddle,
            CriticalPointType::saddle};
}

double lyapunov_value(double phi, const Vector3& w, const Vector3& e, double k_v) {
    if (k_v < 0.0) {
        throw Error("lyapunov_value: k_V must be nonnegative");
    }
    return phi + 0.5 * w.squaredNorm() + k_v * e.dot(w);
}

double phi_from_k(const Matrix3& q_tilde, const Matrix3& k) {
    return k.trace() - (q_tilde * k).trace();
}

Vector3 error_from_k(const Matrix3& q_tilde, const Matrix3& k) {
    const Matrix3 m = q_tilde.transpose() * k - k * q_tilde;
    return -Vector3(m(2, 1), m(0, 2), m(1, 0));
}

GainBounds gain_bounds(const KMatrix& k, double k_omega) {
    if (k_omega <= 0.0) {
        throw Error("gain_bounds: k_omega must be positive");
    }
    GainBounds out;
    const double k_tot = k.k.trace();  // sum of gains (unit directions)
    out.k_v_max_decrease = 4.0 * k_omega / (4.0 * k_tot + k_omega * k_omega);

    // sigma of the sandwich sigma ||e||^2 <= Phi has no closed form here;
    // estimate it by a fixed-seed scan of rotations inside the region where
    // the sandwich holds, Phi < 2 min(lambda_j + lambda_k).
    const double phi_cap =
        2.0 * (k.eigenvalues(0) + k.eigenvalues(1)) * (1.0 - 1e-3);
    std::mt19937_64 rng(0x5eedba11u);
    double sigma = std::numeric_limits<double>::infinity();
    int accepted = 0;
    for (long attempts = 0; accepted < 2048 && attempts < 2000000; ++attempts) {
        const Matrix3 q = sample_uniform_rotation(rng).matrix();
        const double phi = phi_from_k(q, k.k);
        if (phi >= phi_cap || phi <= 1e-12) continue;
        ++accepted;
        sigma = std::min(sigma, phi / error_from_k(q, k.k).squaredNorm());
    }
    out.k_v_max_positivity = accepted > 0 ? std::sqrt(sigma) : 0.0;
    return out;
}

AgentEval evaluate_agent(int agent, const std::vector<MeasurementSet>& sets,
                         const GeometryTables& tables, const Matrix3& r1,
                         const GainTable& gains) {
    AgentEval out;
    if (agent == 1) {
        return out;  // the leader runs no alignment law
    }
    const MeasurementSet& own = sets[static_cast<size_t>(agent - 1)];
    if (agent == 2) {
        const MeasurementSet& m1 = sets[0];
        // Agent 1 is the leader, so the communicated references already are
        // leader-frame: the actual and unforced errors coincide.
        const ErrorVector e = error_vector_agent2(m1, own, gains);
        out.e = e.e;
        out.e_unforced = e.e;
        out.phi = error_function_agent2(m1, own, gains);
        return out;
    }

    const int j = own.control_neighbors[0];
    const int k = own.control_neighbors[1];
    const Vector3 own_j = own.bearing_to(j).vec();
    const Vector3 own_k = own.bearing_to(k).vec();
    const Vector3& own_v = own.virtual_direction->vec();
    const double kj = gains.gain(agent, std::to_string(j));
    const double kk = gains.gain(agent, std::to_string(k));
    const double kv = gains.gain(agent, "virtual");

    // Actual law: references communicated by the neighbors.
    const Vector3 msg_j = sets[static_cast<size_t>(j - 1)].bearing_to(agent).vec();
    const Vector3 msg_k = sets[static_cast<size_t>(k - 1)].bearing_to(agent).vec();
    out.e = kj * pair_error(msg_j, own_j) + kk * pair_error(msg_k, own_k);
    if (const auto ref_v = received_virtual(msg_j, msg_k)) {
        out.e += kv * pair_error(*ref_v, own_v);
    }

    // Unforced system: the same references expressed in the leader's frame.
    const Matrix3 r1t = r1.transpose();
    const auto global_bearing = [&tables, agent](int target) -> const Vector3& {
        for (const auto& [id, b] : tables.partner_bearings[static_cast<size_t>(agent - 1)]) {
            if (id == target) return b;
        }
        throw MissingMeasurementError("evaluate_agent: missing global bearing");
    };
    const Vector3 ref_j = r1t * (-global_bearing(j));
    const Vector3 ref_k = r1t * (-global_bearing(k));
    const Vector3 ref_v =
        r1t * (-*tables.follower_virtual[static_cast<size_t>(agent - 1)]);
    out.e_unforced =
        kj * pair_error(ref_j, own_j) + kk * pair_error(ref_k, own_k) +
        kv * pair_error(ref_v, own_v);
    out.phi = kj * pair_phi(ref_j, own_j) + kk * pair_phi(ref_k, own_k) +
              kv * pair_phi(ref_v, own_v);
    return out;
}

}  // namespace bearing_align
