#include "bearing_align/sensing.hpp"

#include <algorithm>
#include <cmath>

namespace bearing_align {

namespace {

constexpr double kCollocationTol = 1e-9;
constexpr double kDegenerateCrossTol = 1e-6;

UnitVector3 cross_direction(const UnitVector3& a, const UnitVector3& b, const char* what) {
    if (a.frame() != b.frame()) {
        throw Error(std::string(what) + ": directions are expressed in different frames");
    }
    const Vector3 c = a.vec().cross(b.vec());
    if (c.norm() <= kDegenerateCrossTol) {
        throw DegenerateCrossError(std::string(what) + ": directions are nearly collinear");
    }
    return UnitVector3::normalized(c, a.frame());
}

}  // namespace

const UnitVector3& MeasurementSet::bearing_to(int target) const {
    for (const auto& [id, b] : bearings) {
        if (id == target) return b;
    }
    throw MissingMeasurementError("agent " + std::to_string(owner) + " has no bearing to agent " +
                                  std::to_string(target));
}

const UnitVector3& MeasurementSet::normal_for(const std::string& key) const {
    for (const auto& [id, b] : normals) {
        if (id == key) return b;
    }
    throw MissingMeasurementError("agent " + std::to_string(owner) + " has no normal for '" + key +
                                  "'");
}

UnitVector3 bearing(const Vector3& p_i, const Vector3& p_j, const Rotation& r_i, int owner) {
    const Vector3 d = p_j - p_i;
    const double dist = d.norm();
    if (dist <= kCollocationTol) {
        throw CollocatedError("bearing: points are collocated");
    }
    return UnitVector3::normalized(r_i.matrix().transpose() * (d / dist), Frame::body(owner));
}

UnitVector3 landmark_normal(const UnitVector3& b_ij, const UnitVector3& b_ix) {
    return cross_direction(b_ij, b_ix, "landmark_normal");
}

UnitVector3 virtual_third_direction(const UnitVector3& b_ij, const UnitVector3& b_ik) {
    return cross_direction(b_ij, b_ik, "virtual_third_direction");
}

Vector3 bearing_time_derivative(const UnitVector3& b, const Vector3& w) {
    return b.vec().cross(w);
}

GeometryTables GeometryTables::build(const Scenario& s) {
    GeometryTables t;
    t.n = s.n();
    t.mode = s.landmark_mode;
    t.partner_bearings.resize(static_cast<size_t>(t.n));
    t.control_neighbors.resize(static_cast<size_t>(t.n));
    t.follower_virtual.resize(static_cast<size_t>(t.n));

    for (int i = 1; i <= t.n; ++i) {
        auto& list = t.partner_bearings[static_cast<size_t>(i - 1)];
        for (int j : s.graph.sensing_partners_of(i)) {
            const Vector3 d = s.agent(j).position - s.agent(i).position;
            if (d.norm() <= kCollocationTol) {
                throw CollocatedError("agents " + std::to_string(i) + " and " + std::to_string(j) +
                                      " are collocated");
            }
            list.emplace_back(j, (d / d.norm()).eval());
        }
        t.control_neighbors[static_cast<size_t>(i - 1)] = s.graph.neighbors_of(i);
    }

    // Reference points for agents 1 and 2: common landmarks in multi mode,
    // the first common landmark in single mode, agent 3 in none mode.
    const auto common = s.common_landmarks();
    for (int a : {1, 2}) {
        auto& refs = t.reference_points[static_cast<size_t>(a - 1)];
        if (s.landmark_mode == LandmarkMode::none) {
            const Vector3 d = s.agent(3).position - s.agent(a).position;
            if (d.norm() <= kCollocationTol) {
                throw CollocatedError("agent " + std::to_string(a) + " collocated with agent 3");
            }
            refs.emplace_back("tri", (d / d.norm()).eval());
        } else {
            const size_t used = s.landmark_mode == LandmarkMode::single
                                    ? std::min<size_t>(1, common.size())
                                    : common.size();
            for (size_t li = 0; li < used; ++li) {
                const LandmarkSpec* lm = s.find_landmark(common[li]);
                const Vector3 d = lm->position - s.agent(a).position;
                if (d.norm() <= kCollocationTol) {
                    throw CollocatedError("agent " + std::to_string(a) +
                                          " collocated with landmark " + lm->id);
                }
                refs.emplace_back(lm->id, (d / d.norm()).eval());
            }
        }
    }

    // Global-frame normals and, when only one reference is available, the
    // completed third direction. The agent's own bearing to its pair
    // partner comes first in every cross product.
    for (int a : {1, 2}) {
        const int other = (a == 1) ? 2 : 1;
        const Vector3 d = s.agent(other).position - s.agent(a).position;
        const Vector3 b_pair = d / d.norm();
        auto& normals = t.normals_global[static_cast<size_t>(a - 1)];
        for (const auto& [key, b_ref] : t.reference_points[static_cast<size_t>(a - 1)]) {
            const Vector3 c = b_pair.cross(b_ref);
            if (c.norm() <= kDegenerateCrossTol) {
                throw DegenerateCrossError("agent " + std::to_string(a) +
                                           ": reference '" + key + "' is collinear with the pair");
            }
            normals.emplace_back(key, (c / c.norm()).eval());
        }
        if (s.landmark_mode != LandmarkMode::multi && !normals.empty()) {
            const Vector3 c = b_pair.cross(normals.front().second);
            t.pair_virtual_global[static_cast<size_t>(a - 1)] = c / c.norm();
        }
    }

    // Global virtual direction of each follower: cross of its two neighbor
    // bearings, neighbors in ascending order.
    for (int i = 3; i <= t.n; ++i) {
        const auto& nbrs = t.control_neighbors[static_cast<size_t>(i - 1)];
        const auto& list = t.partner_bearings[static_cast<size_t>(i - 1)];
        const auto dir_to = [&list](int j) {
            for (const auto& [id, b] : list) {
                if (id == j) return b;
            }
            throw MissingMeasurementError("missing bearing for virtual direction");
        };
        const Vector3 c = dir_to(nbrs[0]).cross(dir_to(nbrs[1]));
        if (c.norm() <= kDegenerateCrossTol) {
            throw DegenerateCrossError("agent " + std::to_string(i) +
                                       ": neighbor bearings are nearly collinear");
        }
        t.follower_virtual[static_cast<size_t>(i - 1)] = c / c.norm();
    }
    return t;
}

void measure_all(const GeometryTables& tables, std::span<const AgentState> states,
                 std::vector<MeasurementSet>& out) {
    const int n = tables.n;
    if (static_cast<int>(states.size()) != n) {
        throw Error("measure_all: state count does not match scenario");
    }
    out.resize(static_cast<size_t>(n));
    for (int i = 1; i <= n; ++i) {
        MeasurementSet& set = out[static_cast<size_t>(i - 1)];
        set.owner = i;
        set.control_neighbors = tables.control_neighbors[static_cast<size_t>(i - 1)];
        set.bearings.clear();
        set.normals.clear();
        set.virtual_direction.reset();

        const Matrix3 rt = states[static_cast<size_t>(i - 1)].R.matrix().transpose();
        for (const auto& [j, b_global] : tables.partner_bearings[static_cast<size_t>(i - 1)]) {
            set.bearings.emplace_back(
                j, UnitVector3::normalized(rt * b_global, Frame::body(i)));
        }

        if (i <= 2) {
            const int other = (i == 1) ? 2 : 1;
            const UnitVector3& b_pair = set.bearing_to(other);
            for (const auto& [key, b_ref_global] :
                 tables.reference_points[static_cast<size_t>(i - 1)]) {
                const UnitVector3 b_ref =
                    UnitVector3::normalized(rt * b_ref_global, Frame::body(i));
                set.normals.emplace_back(key, landmark_normal(b_pair, b_ref));
            }
            if (tables.mode != LandmarkMode::multi && !set.normals.empty()) {
                set.virtual_direction =
                    virtual_third_direction(b_pair, set.normals.front().second);
            }
        } else {
            const auto& nbrs = set.control_neighbors;
            set.virtual_direction =
                virtual_third_direction(set.bearing_to(nbrs[0]), set.bearing_to(nbrs[1]));
        }
    }
}

std::vector<MeasurementSet> measure_all(const Scenario& s, std::span<const AgentState> states) {
    const GeometryTables tables = GeometryTables::build(s);
    std::vector<MeasurementSet> out;
    measure_all(tables, states, out);
    return out;
}

}  // namespace bearing_align
