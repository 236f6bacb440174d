#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bearing_align/scenario.hpp"
#include "bearing_align/types.hpp"

namespace bearing_align {

/// Every body-frame directional measurement one agent is entitled to.
/// Bearings cover all sensing partners (out- and in-edges); normals exist
/// for agents 1 and 2 only; the virtual direction exists for followers and,
/// in single/none landmark mode, for agents 1 and 2 as well.
struct MeasurementSet {
    int owner = 0;
    std::vector<int> control_neighbors;  // formal neighbor set N_i, sorted
    std::vector<std::pair<int, UnitVector3>> bearings;
    std::vector<std::pair<std::string, UnitVector3>> normals;
    std::optional<UnitVector3> virtual_direction;

    const UnitVector3& bearing_to(int target) const;
    const UnitVector3& normal_for(const std::string& key) const;
};

/// b_ij^i = R_i^T (p_j - p_i)/||p_j - p_i||, tagged body(owner).
/// Throws CollocatedError if the points are within 1e-9.
UnitVector3 bearing(const Vector3& p_i, const Vector3& p_j, const Rotation& r_i, int owner);

/// Unit normal of the plane spanned by two same-frame directions:
/// (b_ij x b_ix)/||b_ij x b_ix||. Throws DegenerateCrossError if the cross
/// product norm is below 1e-6.
UnitVector3 landmark_normal(const UnitVector3& b_ij, const UnitVector3& b_ix);

/// Normalized cross product used as the synthesized third direction; the
/// three directions together span R^3.
UnitVector3 virtual_third_direction(const UnitVector3& b_ij, const UnitVector3& b_ik);

/// Time derivative of a body-frame direction under angular velocity w:
/// returns b x w.
Vector3 bearing_time_derivative(const UnitVector3& b, const Vector3& w);

/// Global-frame direction data, constant for stationary agents; built once
/// per scenario and reused every step.
struct GeometryTables {
    int n = 0;
    LandmarkMode mode = LandmarkMode::multi;
    // per agent (index id-1): sensing partners with global bearings b_ij
    std::vector<std::vector<std::pair<int, Vector3>>> partner_bearings;
    // per agent (index id-1): formal neighbor set N_i
    std::vector<std::vector<int>> control_neighbors;
    // agents 1 and 2 (index id-1): (key, global direction to the reference
    // point) pairs; key is the landmark id, or "tri" in no-landmark mode
    std::array<std::vector<std::pair<std::string, Vector3>>, 2> reference_points;
    // followers (index id-1): global virtual direction b_in
    std::vector<std::optional<Vector3>> follower_virtual;
    // agents 1 and 2: global normals, and the completed third direction in
    // single/none mode
    std::array<std::vector<std::pair<std::string, Vector3>>, 2> normals_global;
    std::array<std::optional<Vector3>, 2> pair_virtual_global;

    static GeometryTables build(const Scenario& s);
};

/// Synthesizes the full per-agent measurement sets for the given states.
std::vector<MeasurementSet> measure_all(const Scenario& s, std::span<const AgentState> states);

/// Reuse-friendly variant for the integration hot path.
void measure_all(const GeometryTables& tables, std::span<const AgentState> states,
                 std::vector<MeasurementSet>& out);

}  // namespace bearing_align
