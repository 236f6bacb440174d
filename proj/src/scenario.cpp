#include "bearing_align/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bearing_align/so3.hpp"

namespace bearing_align {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCollocationTol = 1e-9;
constexpr double kCollinearityThreshold = 1e-6;
constexpr double kCoplanarityThreshold = 1e-6;

}  // namespace

std::vector<int> SensingGraph::neighbors_of(int agent) const {
    std::vector<int> out;
    for (const auto& [i, j] : edges) {
        if (i == agent) out.push_back(j);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> SensingGraph::sensing_partners_of(int agent) const {
    std::set<int> partners;
    for (const auto& [i, j] : edges) {
        if (i == agent) partners.insert(j);
        if (j == agent) partners.insert(i);
    }
    return std::vector<int>(partners.begin(), partners.end());
}

std::vector<std::string> SensingGraph::landmark_targets_of(int agent) const {
    std::vector<std::string> out;
    for (const auto& [a, x] : landmark_edges) {
        if (a == agent) out.push_back(x);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double GainTable::gain(int agent, const std::string& target) const {
    const auto it = k.find({agent, target});
    return it == k.end() ? 1.0 : it->second;
}

void GainTable::set(int agent, const std::string& target, double value) {
    k[{agent, target}] = value;
}

std::string to_string(LandmarkMode mode) {
    switch (mode) {
        case LandmarkMode::multi: return "multi";
        case LandmarkMode::single: return "single";
        case LandmarkMode::none: return "none";
    }
    return "multi";
}

LandmarkMode landmark_mode_from_string(const std::string& s) {
    if (s == "multi") return LandmarkMode::multi;
    if (s == "single") return LandmarkMode::single;
    if (s == "none") return LandmarkMode::none;
    throw ParseError("landmark_mode must be one of multi|single|none, got '" + s + "'");
}

const AgentSpec& Scenario::agent(int id) const {
    if (id < 1 || id > n()) {
        throw Error("Scenario: agent id out of range: " + std::to_string(id));
    }
    return agents[static_cast<size_t>(id - 1)];
}

const LandmarkSpec* Scenario::find_landmark(const std::string& id) const {
    for (const auto& l : landmarks) {
        if (l.id == id) return &l;
    }
    return nullptr;
}

std::vector<std::string> Scenario::common_landmarks() const {
    const auto l1 = graph.landmark_targets_of(1);
    const auto l2 = graph.landmark_targets_of(2);
    std::vector<std::string> common;
    std::set_intersection(l1.begin(), l1.end(), l2.begin(), l2.end(), std::back_inserter(common));
    return common;
}

std::string ValidationReport::to_string() const {
    if (passed()) return "valid";
    std::ostringstream os;
    for (const auto& v : violations) {
        os << v.message << "\n";
    }
    return os.str();
}

double collinearity_measure(const Vector3& a, const Vector3& b, const Vector3& c) {
    const Vector3 ab = b - a;
    const Vector3 ac = c - a;
    if (ab.norm() < kCollocationTol || ac.norm() < kCollocationTol ||
        (c - b).norm() < kCollocationTol) {
        throw CollocatedError("collinearity_measure: points are not pairwise distinct");
    }
    return ab.cross(ac).norm() / (ab.norm() * ac.norm());
}

double coplanarity_measure(std::span<const Vector3> points) {
    if (points.size() < 4) {
        throw Error("coplanarity_measure: need at least 4 points");
    }
    Vector3 centroid = Vector3::Zero();
    for (const auto& p : points) centroid += p;
    centroid /= static_cast<double>(points.size());

    Matrix3 cov = Matrix3::Zero();
    for (const auto& p : points) {
        const Vector3 d = p - centroid;
        cov += d * d.transpose();
    }
    const SymEigen3 eig = sym_eigen3(cov);
    // Singular values of the centered point matrix are sqrt of cov eigenvalues.
    const double smax = std::sqrt(std::max(eig.values(2), 0.0));
    if (smax <= 0.0) return 0.0;
    return std::sqrt(std::max(eig.values(0), 0.0)) / smax;
}

namespace {

void add(ValidationReport& report, Violation::Kind kind, std::string message) {
    report.violations.push_back({kind, std::move(message)});
}

void check_graph_shape(const Scenario& s, ValidationReport& report) {
    const int n = s.n();
    if (n < 2) {
        add(report, Violation::Kind::GraphShape, "GraphShape: need at least two agents");
        return;
    }
    for (int i = 0; i < n; ++i) {
        if (s.agents[static_cast<size_t>(i)].id != i + 1) {
            add(report, Violation::Kind::GraphShape,
                "GraphShape: agent ids must be contiguous 1..n");
            return;
        }
    }
    for (const auto& [i, j] : s.graph.edges) {
        if (i < 1 || i > n || j < 1 || j > n || i == j) {
            add(report, Violation::Kind::GraphShape,
                "GraphShape: edge (" + std::to_string(i) + "," + std::to_string(j) +
                    ") references an invalid agent");
        }
    }
    if (!s.graph.neighbors_of(1).empty()) {
        add(report, Violation::Kind::GraphShape, "GraphShape: the leader has no neighbors");
    }
    const auto n2 = s.graph.neighbors_of(2);
    if (n2 != std::vector<int>{1}) {
        add(report, Violation::Kind::GraphShape,
            "GraphShape: agent 2's only agent-neighbor must be agent 1");
    }
    for (int i = 3; i <= n; ++i) {
        const auto ni = s.graph.neighbors_of(i);
        if (ni.size() != 2) {
            add(report, Violation::Kind::GraphShape,
                "GraphShape: agent " + std::to_string(i) + " must have exactly two neighbors");
            continue;
        }
        if (ni[0] >= i || ni[1] >= i || ni[0] == ni[1]) {
            add(report, Violation::Kind::GraphShape,
                "GraphShape: agent " + std::to_string(i) +
                    " must have two distinct neighbors with smaller index");
        }
    }
    for (const auto& [a, x] : s.graph.landmark_edges) {
        if (a != 1 && a != 2) {
            add(report, Violation::Kind::GraphShape,
                "GraphShape: landmark edges may attach only to agents 1 and 2");
        }
        if (s.find_landmark(x) == nullptr) {
            add(report, Violation::Kind::GraphShape,
                "GraphShape: landmark edge references unknown landmark '" + x + "'");
        }
    }
    const auto common = s.common_landmarks();
    switch (s.landmark_mode) {
        case LandmarkMode::multi:
            if (common.size() < 2) {
                add(report, Violation::Kind::GraphShape,
                    "GraphShape: multi landmark mode needs two or more landmarks measured "
                    "by both agents 1 and 2");
            }
            break;
        case LandmarkMode::single:
            if (common.empty()) {
                add(report, Violation::Kind::GraphShape,
                    "GraphShape: single landmark mode needs a landmark measured by both "
                    "agents 1 and 2");
            }
            break;
        case LandmarkMode::none:
            if (n < 3 || s.graph.neighbors_of(3) != std::vector<int>{1, 2}) {
                add(report, Violation::Kind::GraphShape,
                    "GraphShape: no-landmark mode needs agent 3 with neighbors {1,2}");
            }
            break;
    }
}

}  // namespace

ValidationReport validate_scenario(const Scenario& s) {
    ValidationReport report;
    check_graph_shape(s, report);
    if (!report.passed()) {
        return report;  // geometric checks below assume a sane structure
    }
    const int n = s.n();

    // (a) collocated agents, and agents 1/2 vs. measured landmarks
    for (int i = 1; i <= n; ++i) {
        for (int j = i + 1; j <= n; ++j) {
            if ((s.agent(i).position - s.agent(j).position).norm() < kCollocationTol) {
                add(report, Violation::Kind::Collocated,
                    "Collocated(" + std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
    for (const auto& [a, x] : s.graph.landmark_edges) {
        const LandmarkSpec* lm = s.find_landmark(x);
        if (lm && (s.agent(a).position - lm->position).norm() < kCollocationTol) {
            add(report, Violation::Kind::Collocated,
                "Collocated(" + std::to_string(a) + "," + x + ")");
        }
    }
    if (!report.passed()) {
        return report;  // collinearity measures need distinct points
    }

    const Vector3& p1 = s.agent(1).position;
    const Vector3& p2 = s.agent(2).position;
    const auto common = s.common_landmarks();

    // (b) agents 1,2 collinear with a used landmark (or with agent 3 when
    // the triangulation fallback is active)
    if (s.landmark_mode == LandmarkMode::none) {
        if (collinearity_measure(p1, p2, s.agent(3).position) < kCollinearityThreshold) {
            add(report, Violation::Kind::Collinear, "Collinear(1,2,agent 3)");
        }
    } else {
        const size_t used = s.landmark_mode == LandmarkMode::single ? 1 : common.size();
        for (size_t li = 0; li < used; ++li) {
            const LandmarkSpec* lm = s.find_landmark(common[li]);
            if (collinearity_measure(p1, p2, lm->position) < kCollinearityThreshold) {
                add(report, Violation::Kind::Collinear, "Collinear(1,2," + lm->id + ")");
            }
        }
    }

    // (c) landmarks together with agents 1,2 coplanar (multi mode only)
    if (s.landmark_mode == LandmarkMode::multi) {
        std::vector<Vector3> pts = {p1, p2};
        for (const auto& id : common) {
            pts.push_back(s.find_landmark(id)->position);
        }
        if (coplanarity_measure(pts) < kCoplanarityThreshold) {
            add(report, Violation::Kind::Coplanar,
                "Coplanar: landmarks and agents 1,2 span no volume");
        }
    }

    // (d) follower collinear with its two neighbors
    for (int i = 3; i <= n; ++i) {
        const auto ni = s.graph.neighbors_of(i);
        if (collinearity_measure(s.agent(i).position, s.agent(ni[0]).position,
                                 s.agent(ni[1]).position) < kCollinearityThreshold) {
            add(report, Violation::Kind::FollowerCollinear,
                "FollowerCollinear(" + std::to_string(i) + ";" + std::to_string(ni[0]) + "," +
                    std::to_string(ni[1]) + ")");
        }
    }

    // gains and integration settings
    if (s.gains.k_omega <= 0.0) {
        add(report, Violation::Kind::InvalidGain, "InvalidGain: k_omega must be positive");
    }
    for (const auto& [key, value] : s.gains.k) {
        if (value <= 0.0) {
            add(report, Violation::Kind::InvalidGain,
                "InvalidGain: k(" + std::to_string(key.first) + "," + key.second +
                    ") must be positive");
        }
    }
    if (!(s.integration.dt > 0.0)) {
        add(report, Violation::Kind::InvalidIntegration, "InvalidIntegration: dt must be positive");
    }
    if (s.integration.t_end < 0.0) {
        add(report, Violation::Kind::InvalidIntegration,
            "InvalidIntegration: t_end must be nonnegative");
    }
    if (s.integration.log_stride < 1) {
        add(report, Violation::Kind::InvalidIntegration,
            "InvalidIntegration: log_stride must be at least 1");
    }
    return report;
}

Scenario default_scenario() {
    Scenario s;
    const std::array<Vector3, 8> positions = {
        Vector3(0.0, 0.0, 0.0),  Vector3(2.0, 0.0, 0.0),  Vector3(1.0, -1.5, 0.5),
        Vector3(-1.0, -1.5, 0.3), Vector3(3.0, -1.5, 0.4), Vector3(1.0, -3.0, 0.6),
        Vector3(-1.0, -3.0, 0.2), Vector3(3.0, -3.0, 0.5)};
    const std::array<Rotation, 8> orientations = {
        rot_x(kPi / 6.0),
        rot_x(kPi / 3.0) * rot_z(kPi / 6.0),
        rot_x(2.0 * kPi / 3.0),
        rot_y(kPi / 6.0),
        rot_y(kPi / 2.0),
        rot_y(5.0 * kPi / 6.0) * rot_z(kPi / 6.0),
        rot_z(kPi / 6.0),
        rot_z(8.0 * kPi / 9.0)};
    for (int i = 0; i < 8; ++i) {
        AgentSpec a;
        a.id = i + 1;
        a.position = positions[static_cast<size_t>(i)];
        a.initial_orientation = orientations[static_cast<size_t>(i)];
        s.agents.push_back(a);
    }
    s.landmarks = {{"x1", Vector3(-0.5, 1.0, 1.0)}, {"x2", Vector3(2.5, 1.0, -1.2)}};

    s.graph.agent_count = 8;
    s.graph.edges = {{2, 1}, {3, 1}, {3, 2}, {4, 3}, {4, 1}, {5, 3}, {5, 2},
                     {6, 4}, {6, 5}, {7, 4}, {7, 6}, {8, 6}, {8, 5}};
    s.graph.landmark_edges = {{1, "x1"}, {1, "x2"}, {2, "x1"}, {2, "x2"}};

    s.gains.k_omega = 2.0;
    s.gains.set(2, "1", 1.0);
    s.gains.set(2, "x1", 1.0);
    s.gains.set(2, "x2", 1.0);
    for (int i = 3; i <= 8; ++i) {
        for (int j : s.graph.neighbors_of(i)) {
            s.gains.set(i, std::to_string(j), 1.0);
        }
        s.gains.set(i, "virtual", 1.0);
    }
    s.integration = {1e-3, 30.0, 100};
    s.landmark_mode = LandmarkMode::multi;
    return s;
}

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& context,
                  std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {}) {
    if (!obj.is_object()) {
        throw ParseError(context + ": expected an object");
    }
    for (const char* key : required) {
        if (!obj.contains(key)) {
            throw ParseError(context + ": missing required field '" + key + "'");
        }
    }
    for (const auto& [key, value] : obj.items()) {
        const auto in = [&key](std::initializer_list<const char*> list) {
            return std::any_of(list.begin(), list.end(),
                               [&key](const char* k) { return key == k; });
        };
        if (!in(required) && !in(optional)) {
            throw ParseError(context + ": unknown field '" + key + "'");
        }
    }
}

Vector3 vector3_from_json(const json& j, const std::string& context) {
    if (!j.is_array() || j.size() != 3) {
        throw ParseError(context + ": expected an array of 3 numbers");
    }
    Vector3 v;
    for (int i = 0; i < 3; ++i) {
        if (!j[static_cast<size_t>(i)].is_number()) {
            throw ParseError(context + ": expected an array of 3 numbers");
        }
        v(i) = j[static_cast<size_t>(i)].get<double>();
    }
    if (!v.allFinite()) {
        throw ParseError(context + ": entries must be finite");
    }
    return v;
}

Matrix3 matrix3_from_json(const json& j, const std::string& context) {
    if (!j.is_array() || j.size() != 3) {
        throw ParseError(context + ": expected a 3x3 array");
    }
    Matrix3 m;
    for (int r = 0; r < 3; ++r) {
        const Vector3 row = vector3_from_json(j[static_cast<size_t>(r)], context);
        m.row(r) = row;
    }
    return m;
}

json vector3_to_json(const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); }

json matrix3_to_json(const Matrix3& m) {
    json rows = json::array();
    for (int r = 0; r < 3; ++r) {
        rows.push_back(vector3_to_json(m.row(r)));
    }
    return rows;
}

}  // namespace

Scenario scenario_from_json(const nlohmann::json& j) {
    require_keys(j, "scenario",
                 {"agents", "landmarks", "edges", "landmark_edges", "gains", "integration",
                  "landmark_mode"});
    Scenario s;

    if (!j["agents"].is_array()) throw ParseError("agents: expected an array");
    for (const auto& ja : j["agents"]) {
        require_keys(ja, "agent", {"id", "position", "initial_orientation"},
                     {"initial_angular_velocity"});
        AgentSpec a;
        if (!ja["id"].is_number_integer()) throw ParseError("agent.id: expected an integer");
        a.id = ja["id"].get<int>();
        a.position = vector3_from_json(ja["position"], "agent.position");
        const Matrix3 m = matrix3_from_json(ja["initial_orientation"], "agent.initial_orientation");
        try {
            a.initial_orientation = Rotation::from_matrix(m);
        } catch (const NotARotationError&) {
            throw ParseError("agent " + std::to_string(a.id) +
                             ": initial_orientation is not a rotation matrix");
        }
        if (ja.contains("initial_angular_velocity")) {
            a.initial_angular_velocity =
                vector3_from_json(ja["initial_angular_velocity"], "agent.initial_angular_velocity");
        }
        s.agents.push_back(a);
    }
    std::sort(s.agents.begin(), s.agents.end(),
              [](const AgentSpec& a, const AgentSpec& b) { return a.id < b.id; });

    if (!j["landmarks"].is_array()) throw ParseError("landmarks: expected an array");
    for (const auto& jl : j["landmarks"]) {
        require_keys(jl, "landmark", {"id", "position"});
        LandmarkSpec l;
        if (!jl["id"].is_string()) throw ParseError("landmark.id: expected a string");
        l.id = jl["id"].get<std::string>();
        l.position = vector3_from_json(jl["position"], "landmark.position");
        s.landmarks.push_back(l);
    }

    if (!j["edges"].is_array()) throw ParseError("edges: expected an array of [i,j] pairs");
    for (const auto& je : j["edges"]) {
        if (!je.is_array() || je.size() != 2 || !je[0].is_number_integer() ||
            !je[1].is_number_integer()) {
            throw ParseError("edges: expected an array of [i,j] integer pairs");
        }
        s.graph.edges.emplace_back(je[0].get<int>(), je[1].get<int>());
    }
    if (!j["landmark_edges"].is_array()) {
        throw ParseError("landmark_edges: expected an array of [agent,landmark] pairs");
    }
    for (const auto& je : j["landmark_edges"]) {
        if (!je.is_array() || je.size() != 2 || !je[0].is_number_integer() || !je[1].is_string()) {
            throw ParseError("landmark_edges: expected an array of [agent,\"landmark\"] pairs");
        }
        s.graph.landmark_edges.emplace_back(je[0].get<int>(), je[1].get<std::string>());
    }
    s.graph.agent_count = s.n();

    require_keys(j["gains"], "gains", {"k_omega"}, {"k"});
    if (!j["gains"]["k_omega"].is_number()) throw ParseError("gains.k_omega: expected a number");
    s.gains.k_omega = j["gains"]["k_omega"].get<double>();
    if (j["gains"].contains("k")) {
        const auto& jk = j["gains"]["k"];
        if (!jk.is_object()) throw ParseError("gains.k: expected an object keyed by agent id");
        for (const auto& [agent_key, targets] : jk.items()) {
            int agent_id = 0;
            try {
                agent_id = std::stoi(agent_key);
            } catch (...) {
                throw ParseError("gains.k: agent key '" + agent_key + "' is not an integer");
            }
            if (!targets.is_object()) {
                throw ParseError("gains.k." + agent_key + ": expected an object of targets");
            }
            for (const auto& [target, value] : targets.items()) {
                if (!value.is_number()) {
                    throw ParseError("gains.k." + agent_key + "." + target +
                                     ": expected a number");
                }
                s.gains.set(agent_id, target, value.get<double>());
            }
        }
    }

    require_keys(j["integration"], "integration", {"dt", "t_end"}, {"log_stride"});
    if (!j["integration"]["dt"].is_number() || !j["integration"]["t_end"].is_number()) {
        throw ParseError("integration: dt and t_end must be numbers");
    }
    s.integration.dt = j["integration"]["dt"].get<double>();
    s.integration.t_end = j["integration"]["t_end"].get<double>();
    if (j["integration"].contains("log_stride")) {
        if (!j["integration"]["log_stride"].is_number_integer()) {
            throw ParseError("integration.log_stride: expected an integer");
        }
        s.integration.log_stride = j["integration"]["log_stride"].get<int>();
    }

    if (!j["landmark_mode"].is_string()) throw ParseError("landmark_mode: expected a string");
    s.landmark_mode = landmark_mode_from_string(j["landmark_mode"].get<std::string>());
    return s;
}

nlohmann::ordered_json scenario_to_json(const Scenario& s) {
    nlohmann::ordered_json j;
    j["agents"] = nlohmann::ordered_json::array();
    for (const auto& a : s.agents) {
        nlohmann::ordered_json ja;
        ja["id"] = a.id;
        ja["position"] = vector3_to_json(a.position);
        ja["initial_orientation"] = matrix3_to_json(a.initial_orientation.matrix());
        ja["initial_angular_velocity"] = vector3_to_json(a.initial_angular_velocity);
        j["agents"].push_back(ja);
    }
    j["landmarks"] = nlohmann::ordered_json::array();
    for (const auto& l : s.landmarks) {
        j["landmarks"].push_back({{"id", l.id}, {"position", vector3_to_json(l.position)}});
    }
    j["edges"] = nlohmann::ordered_json::array();
    for (const auto& [i, k] : s.graph.edges) {
        j["edges"].push_back(nlohmann::ordered_json::array({i, k}));
    }
    j["landmark_edges"] = nlohmann::ordered_json::array();
    for (const auto& [a, x] : s.graph.landmark_edges) {
        j["landmark_edges"].push_back(nlohmann::ordered_json::array({a, x}));
    }
    nlohmann::ordered_json jk = nlohmann::ordered_json::object();
    for (const auto& [key, value] : s.gains.k) {
        jk[std::to_string(key.first)][key.second] = value;
    }
    j["gains"] = {{"k_omega", s.gains.k_omega}, {"k", jk}};
    j["integration"] = {{"dt", s.integration.dt},
                        {"t_end", s.integration.t_end},
                        {"log_stride", s.integration.log_stride}};
    j["landmark_mode"] = to_string(s.landmark_mode);
    return j;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open scenario file: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return scenario_from_json(j);
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write scenario file: " + path.string());
    }
    out << scenario_to_json(s).dump(2) << "\n";
}

std::string scenario_digest(const Scenario& s) {
    const std::string text = scenario_to_json(s).dump();
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (const unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace bearing_align
