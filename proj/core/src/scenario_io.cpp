#include "stewart_cbf/scenario_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "stewart_cbf/errors.hpp"

namespace stewart_cbf {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

double get_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + " must be a number");
    return v.get<double>();
}

Vec6 get_vec6(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 6) throw ConfigError(where + " must be an array of 6 numbers");
    Vec6 out;
    for (int i = 0; i < 6; ++i) out(i) = get_number(v[i], where + "[" + std::to_string(i) + "]");
    return out;
}

Vec3 get_vec3(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3) throw ConfigError(where + " must be an array of 3 numbers");
    return Vec3(get_number(v[0], where), get_number(v[1], where), get_number(v[2], where));
}

OptionalBounds get_bounds(const json& v, const std::string& where) {
    OptionalBounds out{};
    if (v.is_null()) return out;
    if (!v.is_array() || v.size() != 6) {
        throw ConfigError(where + " must be an array of 6 numbers or nulls");
    }
    for (int i = 0; i < 6; ++i) {
        if (!v[i].is_null()) out[i] = get_number(v[i], where + "[" + kAxisNames[i] + "]");
    }
    return out;
}

std::vector<double> get_list(const json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + " must be an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_number(v[i], where));
    return out;
}

json vec_json(const Vec6& v) { return json(std::vector<double>(v.data(), v.data() + 6)); }

json point_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json bounds_json(const OptionalBounds& b) {
    json out = json::array();
    for (const auto& v : b) out.push_back(v ? json(*v) : json(nullptr));
    return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

FallbackPolicy fallback_from_string(const std::string& s) {
    for (auto p : {FallbackPolicy::error, FallbackPolicy::position_priority, FallbackPolicy::damped}) {
        if (s == to_string(p)) return p;
    }
    throw ConfigError("unknown fallback policy '" + s + "'");
}

BranchRule rule_from_string(const std::string& s) {
    for (auto r : {BranchRule::kkt, BranchRule::residual_sign}) {
        if (s == to_string(r)) return r;
    }
    throw ConfigError("unknown branch rule '" + s + "'");
}

std::string get_string(const json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where + " must be a string");
    return v.get<std::string>();
}

void parse_geometry(const json& g, PlatformGeometry& geom) {
    if (g.contains("base_points") || g.contains("platform_points")) {
        reject_unknown(g, {"base_points", "platform_points", "base_radius", "platform_radius"},
                       "model.geometry");
        if (!g.contains("base_points") || !g.contains("platform_points")) {
            throw ConfigError("model.geometry needs both base_points and platform_points");
        }
        const json& bp = g["base_points"];
        const json& pp = g["platform_points"];
        if (!bp.is_array() || bp.size() != 6 || !pp.is_array() || pp.size() != 6) {
            throw ConfigError("model.geometry points must be arrays of 6 points");
        }
        for (int i = 0; i < 6; ++i) {
            geom.base_points[i] = get_vec3(bp[i], "model.geometry.base_points");
            geom.platform_points[i] = get_vec3(pp[i], "model.geometry.platform_points");
        }
        geom.effective_base_radius = g.contains("base_radius")
                                         ? get_number(g["base_radius"], "model.geometry.base_radius")
                                         : geom.base_points[0].head<2>().norm();
        geom.effective_platform_radius =
            g.contains("platform_radius")
                ? get_number(g["platform_radius"], "model.geometry.platform_radius")
                : geom.platform_points[0].head<2>().norm();
        return;
    }
    reject_unknown(g, {"base_radius", "platform_radius", "base_half_angle_deg", "platform_half_angle_deg"},
                   "model.geometry");
    auto num = [&](const char* key, double def) {
        return g.contains(key) ? get_number(g[key], std::string("model.geometry.") + key) : def;
    };
    geom = PlatformGeometry::symmetric(num("base_radius", 0.20), num("platform_radius", 0.16),
                                       num("base_half_angle_deg", 15.0),
                                       num("platform_half_angle_deg", 50.0));
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ScenarioConfig c = ScenarioConfig::reproduction_scenario();
    reject_unknown(doc,
                   {"duration", "dt", "filter", "seed", "initial_state", "waypoints", "barrier", "lqr",
                    "model", "filter_options", "region_gap", "speedup_threshold", "euler_convention", "input_hold"},
                   "config");
    if (doc.contains("euler_convention") && get_string(doc["euler_convention"], "euler_convention") != "ZYX") {
        throw ConfigError("euler_convention must be \"ZYX\"");
    }
    if (doc.contains("duration")) c.duration = get_number(doc["duration"], "duration");
    if (doc.contains("dt")) c.dt = get_number(doc["dt"], "dt");
    if (doc.contains("filter")) c.filter_mode = filter_mode_from_string(get_string(doc["filter"], "filter"));
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) throw ConfigError("seed must be a nonnegative integer");
        c.rng_seed = doc["seed"].get<std::uint64_t>();
    }
    if (doc.contains("input_hold")) {
        c.input_hold = input_hold_from_string(get_string(doc["input_hold"], "input_hold"));
    }
    if (doc.contains("region_gap")) c.region_gap = get_number(doc["region_gap"], "region_gap");
    if (doc.contains("speedup_threshold")) {
        c.speedup_threshold = get_number(doc["speedup_threshold"], "speedup_threshold");
    }
    if (doc.contains("initial_state")) {
        const json& s = doc["initial_state"];
        reject_unknown(s, {"q", "qdot"}, "initial_state");
        if (s.contains("q")) c.initial_state.q = get_vec6(s["q"], "initial_state.q");
        if (s.contains("qdot")) c.initial_state.qdot = get_vec6(s["qdot"], "initial_state.qdot");
    }
    if (doc.contains("waypoints")) {
        const json& w = doc["waypoints"];
        if (!w.is_array()) throw ConfigError("waypoints must be an array");
        c.schedule.clear();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const std::string where = "waypoints[" + std::to_string(i) + "]";
            reject_unknown(w[i], {"t_start", "t_end", "q_des", "qdot_des"}, where);
            if (!w[i].contains("t_start") || !w[i].contains("t_end") || !w[i].contains("q_des")) {
                throw ConfigError(where + " needs t_start, t_end and q_des");
            }
            WaypointSegment seg;
            seg.t_start = get_number(w[i]["t_start"], where + ".t_start");
            seg.t_end = get_number(w[i]["t_end"], where + ".t_end");
            seg.q_des = get_vec6(w[i]["q_des"], where + ".q_des");
            if (w[i].contains("qdot_des")) seg.qdot_des = get_vec6(w[i]["qdot_des"], where + ".qdot_des");
            c.schedule.push_back(seg);
        }
    }
    if (doc.contains("barrier")) {
        const json& b = doc["barrier"];
        reject_unknown(b,
                       {"q_max", "q_min", "qdot_max", "qdot_min", "alpha_e", "alpha_D", "alpha_v", "beta",
                        "alpha_Dj", "alpha_vk"},
                       "barrier");
        BarrierConfig& bc = c.barrier;
        if (b.contains("q_max")) bc.q_max = get_bounds(b["q_max"], "barrier.q_max");
        if (b.contains("q_min")) bc.q_min = get_bounds(b["q_min"], "barrier.q_min");
        if (b.contains("qdot_max")) bc.qdot_max = get_bounds(b["qdot_max"], "barrier.qdot_max");
        if (b.contains("qdot_min")) bc.qdot_min = get_bounds(b["qdot_min"], "barrier.qdot_min");
        if (b.contains("alpha_e")) bc.alpha_e = get_number(b["alpha_e"], "barrier.alpha_e");
        if (b.contains("alpha_D")) bc.alpha_D = get_number(b["alpha_D"], "barrier.alpha_D");
        if (b.contains("alpha_v")) bc.alpha_v = get_number(b["alpha_v"], "barrier.alpha_v");
        if (b.contains("beta")) bc.beta = get_number(b["beta"], "barrier.beta");
        if (b.contains("alpha_Dj")) bc.alpha_Dj = get_list(b["alpha_Dj"], "barrier.alpha_Dj");
        if (b.contains("alpha_vk")) bc.alpha_vk = get_list(b["alpha_vk"], "barrier.alpha_vk");
    }
    if (doc.contains("lqr")) {
        const json& l = doc["lqr"];
        reject_unknown(l, {"q_pos", "q_vel", "r"}, "lqr");
        if (l.contains("q_pos")) c.lqr.q_pos = get_vec6(l["q_pos"], "lqr.q_pos");
        if (l.contains("q_vel")) c.lqr.q_vel = get_vec6(l["q_vel"], "lqr.q_vel");
        if (l.contains("r")) c.lqr.r = get_vec6(l["r"], "lqr.r");
    }
    if (doc.contains("model")) {
        const json& m = doc["model"];
        reject_unknown(m, {"mass", "inertia", "gravity", "geometry"}, "model");
        if (m.contains("mass")) c.model.inertia.mass = get_number(m["mass"], "model.mass");
        if (m.contains("gravity")) c.model.inertia.gravity = get_number(m["gravity"], "model.gravity");
        if (m.contains("inertia")) {
            const json& I = m["inertia"];
            if (I.is_array() && I.size() == 3 && !I[0].is_array()) {
                c.model.inertia.body_inertia = get_vec3(I, "model.inertia").asDiagonal();
            } else if (I.is_array() && I.size() == 3) {
                for (int r = 0; r < 3; ++r) {
                    c.model.inertia.body_inertia.row(r) = get_vec3(I[r], "model.inertia").transpose();
                }
            } else {
                throw ConfigError("model.inertia must be a 3-vector diagonal or a 3x3 matrix");
            }
        }
        if (m.contains("geometry")) parse_geometry(m["geometry"], c.model.geometry);
    }
    if (doc.contains("filter_options")) {
        const json& f = doc["filter_options"];
        reject_unknown(f, {"fallback", "branch_rule", "gamma_tolerance"}, "filter_options");
        if (f.contains("fallback")) {
            c.filter_options.fallback = fallback_from_string(get_string(f["fallback"], "filter_options.fallback"));
        }
        if (f.contains("branch_rule")) {
            c.filter_options.rule = rule_from_string(get_string(f["branch_rule"], "filter_options.branch_rule"));
        }
        if (f.contains("gamma_tolerance")) {
            c.filter_options.gamma_tolerance = get_number(f["gamma_tolerance"], "filter_options.gamma_tolerance");
        }
    }
    return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

std::string normalized_json(const ScenarioConfig& c, int indent) {
    json doc;
    doc["euler_convention"] = "ZYX";
    doc["duration"] = c.duration;
    doc["dt"] = c.dt;
    doc["filter"] = to_string(c.filter_mode);
    doc["seed"] = c.rng_seed;
    doc["input_hold"] = to_string(c.input_hold);
    doc["region_gap"] = c.region_gap;
    doc["speedup_threshold"] = c.speedup_threshold;
    doc["initial_state"] = {{"q", vec_json(c.initial_state.q)}, {"qdot", vec_json(c.initial_state.qdot)}};
    json w = json::array();
    for (const auto& s : c.schedule) {
        w.push_back({{"t_start", s.t_start}, {"t_end", s.t_end}, {"q_des", vec_json(s.q_des)},
                     {"qdot_des", vec_json(s.qdot_des)}});
    }
    doc["waypoints"] = w;
    const BarrierConfig& b = c.barrier;
    doc["barrier"] = {{"q_max", bounds_json(b.q_max)},       {"q_min", bounds_json(b.q_min)},
                      {"qdot_max", bounds_json(b.qdot_max)}, {"qdot_min", bounds_json(b.qdot_min)},
                      {"alpha_e", b.alpha_e},                {"alpha_D", b.alpha_D},
                      {"alpha_v", b.alpha_v},                {"beta", b.beta},
                      {"alpha_Dj", b.alpha_Dj},              {"alpha_vk", b.alpha_vk}};
    doc["lqr"] = {{"q_pos", vec_json(c.lqr.q_pos)}, {"q_vel", vec_json(c.lqr.q_vel)}, {"r", vec_json(c.lqr.r)}};
    json inertia = json::array();
    for (int r = 0; r < 3; ++r) {
        inertia.push_back(point_json(c.model.inertia.body_inertia.row(r).transpose()));
    }
    json bp = json::array(), pp = json::array();
    for (int i = 0; i < 6; ++i) {
        bp.push_back(point_json(c.model.geometry.base_points[i]));
        pp.push_back(point_json(c.model.geometry.platform_points[i]));
    }
    doc["model"] = {{"mass", c.model.inertia.mass},
                    {"gravity", c.model.inertia.gravity},
                    {"inertia", inertia},
                    {"geometry",
                     {{"base_radius", c.model.geometry.effective_base_radius},
                      {"platform_radius", c.model.geometry.effective_platform_radius},
                      {"base_points", bp},
                      {"platform_points", pp}}}};
    doc["filter_options"] = {{"fallback", to_string(c.filter_options.fallback)},
                             {"branch_rule", to_string(c.filter_options.rule)},
                             {"gamma_tolerance", c.filter_options.gamma_tolerance}};
    return doc.dump(indent) + "\n";
}

std::string trajectory_csv(const ScenarioLog& log) {
    std::string out;
    out.reserve(log.records.size() * 1200 + 512);
    out += "t";
    auto cols = [&](const char* prefix) {
        for (int i = 1; i <= 6; ++i) out += std::string(",") + prefix + std::to_string(i);
    };
    cols("q");
    cols("qd");
    cols("qdes");
    cols("Fdes");
    cols("Fout");
    for (const auto& id : log.position_ids) out += ",hD_" + id.label();
    for (const auto& id : log.velocity_ids) out += ",hv_" + id.label();
    out += ",hbarD,hbarV,branch,solve_time_s,cbf_active\n";

    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out += buf;
    };
    auto vec = [&](const Vec6& v) {
        for (int i = 0; i < 6; ++i) {
            out += ',';
            num(v(i));
        }
    };
    for (const auto& r : log.records) {
        num(r.t);
        vec(r.q);
        vec(r.qdot);
        vec(r.q_des);
        vec(r.F_des);
        vec(r.F_out);
        for (double h : r.h_D) {
            out += ',';
            num(h);
        }
        for (double h : r.h_v) {
            out += ',';
            num(h);
        }
        out += ',';
        num(r.hbar_D);
        out += ',';
        num(r.hbar_v);
        out += ',';
        out += to_string(r.branch);
        out += ',';
        num(r.solve_time);
        out += r.cbf_active ? ",1\n" : ",0\n";
    }
    return out;
}

std::string summary_json(const ScenarioResult& result, int indent) {
    const ScenarioLog& log = result.log;
    const SafetyAudit& a = result.audit;
    json regions = json::array();
    for (const auto& r : result.timing.regions) {
        regions.push_back({{"region", r.index},
                           {"t_start", r.t_start},
                           {"t_end", r.t_end},
                           {"steps", r.steps},
                           {"avg_solve_time_s", r.avg_solve_time},
                           {"max_solve_time_s", r.max_solve_time}});
    }
    json doc;
    doc["filter"] = to_string(log.mode);
    doc["completed"] = log.completed;
    doc["error"] = log.error.empty() ? json(nullptr) : json(log.error);
    doc["steps"] = log.records.size();
    doc["dt"] = log.dt;
    doc["violations"] = a.violations();
    doc["audit"] = {{"tolerance", kAuditTolerance},
                    {"min_h_D", number_or_null(a.min_h_D)},
                    {"min_h_v", number_or_null(a.min_h_v)},
                    {"min_hbar_D", number_or_null(a.min_hbar_D)},
                    {"min_hbar_v", number_or_null(a.min_hbar_v)},
                    {"position_violation", a.position_violation},
                    {"velocity_violation", a.velocity_violation}};
    doc["timing"] = {{"region_count", result.timing.regions.size()},
                     {"regions", regions},
                     {"overall_avg_solve_time_s", result.timing.overall_avg},
                     {"overall_max_solve_time_s", result.timing.overall_max},
                     {"notice", result.timing.notice}};
    // Published hardware timings, for context only.
    doc["reference_timing"] = {{"qp_avg_s", 4.98e-3},
                               {"closed_form_avg_s", 5.83e-4},
                               {"qp_max_s", 1.372e-2},
                               {"closed_form_max_s", 2.427e-3}};
    return doc.dump(indent) + "\n";
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StewartError("cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw StewartError("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

}  // namespace stewart_cbf
