#pragma once

#include "mgrid/params.hpp"
#include "mgrid/plant.hpp"
#include "mgrid/scenario.hpp"
#include "mgrid/stability.hpp"
#include "mgrid/topology.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mgrid {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Case-study parameter presets. "table1" is the base network; "cs2" scales
/// the rated currents by 1.5 and the load conductances by 5; "pi" adds the
/// proportional branch (k_p = 10, 70/30 actuation split). All carry the same
/// event schedule: controller enable at 5 s, load steps at 50/75/100 s, DG 1
/// out between 200 s and 300 s, load 4 out between 370 s and 410 s.
inline json preset_json(const std::string& name) {
    json base;
    base["electrical"] = {
        {"r_g", {0.5, 0.4, 0.55, 0.6}},
        {"l_g", {0.5, 0.4, 0.55, 0.6}},
        {"r_e", {1.0, 2.0, 2.0, 1.0, 1.0}},
        {"l_e", {1.0, 2.0, 2.0, 1.0, 1.0}},
        {"c_n", {22e-3, 22e-3, 22e-3, 22e-3}},
        {"g_cte", {1.0 / 40.0, 1.0 / 30.0, 1.0 / 30.0, 1.0 / 30.0}},
        {"i_cte", {1.0, 1.2, 0.8, 1.0}},
        {"i_rated", {12.0, 4.0, 8.0, 8.0}},
        {"r_base", 0.15},
        {"l_base", 300e-6},
    };
    base["topology"] = {
        {"gen_bus", {1, 2, 3, 4}},
        {"lines", {{1, 2}, {2, 3}, {3, 4}, {4, 1}, {1, 3}}},
        {"cyber_edges", {{1, 2, 5.0}, {2, 3, 5.0}, {3, 4, 5.0}, {4, 1, 5.0}}},
    };
    base["controller"] = {
        {"v_n", 48.0},   {"mu", 0.05},       {"delta1_frac", 1.0},
        {"k_v", 0.3},    {"k_p", 1.0},       {"phi_band", 1.0},
        {"tau", 1.0},    {"tau_p", 10.0},    {"tau_d", 10.0},
        {"k", 10.0},     {"alpha", 1e-11},   {"b", 5.0},
        {"v_tol", 0.03}, {"b_v", 1e-5},      {"b_zeta", 1e-3},
    };
    base["scenario"] = {
        {"t_end", 450.0},
        {"dt", 1e-4},
        {"sample_every", 100},
        {"events",
         {
             {{"t", 5.0}, {"kind", "controller_enable"}},
             {{"t", 50.0}, {"kind", "load_icte_scale"}, {"bus", 1}, {"factor", 1.25}},
             {{"t", 75.0}, {"kind", "load_g_scale"}, {"bus", 3}, {"factor", 1.15}},
             {{"t", 100.0}, {"kind", "load_icte_scale"}, {"bus", 1}, {"factor", 0.85}},
             {{"t", 200.0}, {"kind", "dg_disconnect"}, {"dg", 1}},
             {{"t", 300.0}, {"kind", "dg_reconnect"}, {"dg", 1}},
             {{"t", 370.0}, {"kind", "load_disconnect"}, {"bus", 4}},
             {{"t", 410.0}, {"kind", "load_reconnect"}, {"bus", 4}},
         }},
    };
    base["solver"] = {{"newton_tol", 1e-9}, {"max_iter", 50}};
    base["certificate"] = {
        {"consensus_points", 41}, {"range", {-1.0, 1.0}}, {"random_points", 20},
        {"margin", 0.0},          {"fd_step", 1e-5},      {"seed", 1},
    };

    if (name == "table1") return base;
    if (name == "cs2" || name == "pi") {
        base["electrical"]["i_rated"] = {18.0, 6.0, 12.0, 12.0};
        base["electrical"]["g_cte"] = {5.0 / 40.0, 5.0 / 30.0, 5.0 / 30.0, 5.0 / 30.0};
        if (name == "pi") {
            base["controller"]["k_p"] = 10.0;
            base["controller"]["delta1_frac"] = 0.7;
        }
        return base;
    }
    throw ConfigError("unknown preset '" + name + "' (available: table1, cs2, pi)");
}

// ---------------------------------------------------------------------------
// Strict merge and overrides
// ---------------------------------------------------------------------------

namespace detail {

inline bool types_compatible(const json& schema, const json& value) {
    if (schema.is_number() && value.is_number()) return true;
    if (schema.is_boolean() && value.is_boolean()) return true;
    if (schema.is_string() && value.is_string()) return true;
    if (schema.is_array() && value.is_array()) return true;
    if (schema.is_object() && value.is_object()) return true;
    return false;
}

/// Overlays `patch` onto `base`, rejecting keys absent from the base schema
/// and type mismatches. Arrays replace wholesale.
inline void strict_merge(json& base, const json& patch, const std::string& prefix) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) {
            throw ConfigError("unknown config key '" + path + "'");
        }
        json& slot = base[it.key()];
        if (!types_compatible(slot, it.value())) {
            throw ConfigError("type mismatch at '" + path + "'");
        }
        if (slot.is_object()) {
            strict_merge(slot, it.value(), path);
        } else {
            slot = it.value();
        }
    }
}

inline void apply_override(json& base, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(value_text);
    } catch (const json::parse_error&) {
        value = value_text;  // bare strings allowed
    }
    json* node = &base;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("empty override path");
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i])) {
            throw ConfigError("unknown config key '" + path + "'");
        }
        node = &(*node)[parts[i]];
    }
    if (!node->contains(parts.back())) {
        throw ConfigError("unknown config key '" + path + "'");
    }
    json& slot = (*node)[parts.back()];
    if (!types_compatible(slot, value)) {
        throw ConfigError("type mismatch at '" + path + "'");
    }
    slot = value;
}

inline Vec vec_from_json(const json& arr, const std::string& path) {
    if (!arr.is_array()) throw ConfigError("'" + path + "' must be an array");
    Vec v(arr.size());
    for (size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw ConfigError("'" + path + "' must hold numbers");
        v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    }
    return v;
}

inline std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Resolved run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string preset = "table1";
    GridTopology topo;
    SystemParams params;  ///< derived controller constants filled in
    Scenario scenario;
    SimOptions sim;
    CertificateGridSpec certificate;
    double newton_tol = 1e-9;
    int newton_max_iter = 50;
    bool controller_initially_enabled = true;
    json resolved;
    std::uint64_t hash = 0;

    std::string hash_hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(hash));
        return buf;
    }

    SimModel make_model() const {
        return SimModel::make(topo, params, controller_initially_enabled);
    }
};

namespace detail {

inline ScenarioEvent event_from_json(const json& ev) {
    if (!ev.is_object() || !ev.contains("t") || !ev.contains("kind")) {
        throw ConfigError("scenario event needs 't' and 'kind'");
    }
    for (auto it = ev.begin(); it != ev.end(); ++it) {
        const std::string& k = it.key();
        if (k != "t" && k != "kind" && k != "bus" && k != "dg" && k != "factor") {
            throw ConfigError("unknown event key '" + k + "'");
        }
    }
    ScenarioEvent out;
    out.time = ev.at("t").get<double>();
    const std::string kind = ev.at("kind").get<std::string>();
    auto index_of = [&](const char* key) {
        if (!ev.contains(key)) {
            throw ConfigError("event '" + kind + "' needs '" + key + "'");
        }
        return ev.at(key).get<int>() - 1;  // config indices are 1-based
    };
    if (kind == "controller_enable") {
        out.kind = EventKind::controller_enable;
    } else if (kind == "load_icte_scale") {
        out.kind = EventKind::load_icte_scale;
        out.index = index_of("bus");
        out.factor = ev.at("factor").get<double>();
    } else if (kind == "load_g_scale") {
        out.kind = EventKind::load_g_scale;
        out.index = index_of("bus");
        out.factor = ev.at("factor").get<double>();
    } else if (kind == "dg_disconnect") {
        out.kind = EventKind::dg_disconnect;
        out.index = index_of("dg");
    } else if (kind == "dg_reconnect") {
        out.kind = EventKind::dg_reconnect;
        out.index = index_of("dg");
    } else if (kind == "load_disconnect") {
        out.kind = EventKind::load_disconnect;
        out.index = index_of("bus");
    } else if (kind == "load_reconnect") {
        out.kind = EventKind::load_reconnect;
        out.index = index_of("bus");
    } else {
        throw ConfigError("unknown event kind '" + kind + "'");
    }
    return out;
}

}  // namespace detail

/// Parses a fully-merged configuration document into a validated RunConfig.
/// Validation failures name the violated invariant.
inline RunConfig config_from_json(json doc, const std::string& preset_name) {
    RunConfig rc;
    rc.preset = preset_name.empty() ? "table1" : preset_name;
    rc.resolved = std::move(doc);
    rc.hash = detail::fnv1a64(rc.resolved.dump());
    const json& cfg = rc.resolved;

    // topology (config indices are 1-based)
    const auto& jt = cfg.at("topology");
    std::vector<int> gen_bus;
    for (const auto& b : jt.at("gen_bus")) gen_bus.push_back(b.get<int>() - 1);
    std::vector<std::array<int, 2>> lines;
    for (const auto& ln : jt.at("lines")) {
        if (!ln.is_array() || ln.size() != 2) {
            throw ConfigError("topology.lines entries must be [from, to]");
        }
        lines.push_back({ln[0].get<int>() - 1, ln[1].get<int>() - 1});
    }
    int n_k = 0;
    for (int b : gen_bus) n_k = std::max(n_k, b + 1);
    for (const auto& ln : lines) n_k = std::max({n_k, ln[0] + 1, ln[1] + 1});
    const int n_g = static_cast<int>(gen_bus.size());
    Mat adj = Mat::Zero(n_g, n_g);
    for (const auto& edge : jt.at("cyber_edges")) {
        if (!edge.is_array() || (edge.size() != 2 && edge.size() != 3)) {
            throw ConfigError("topology.cyber_edges entries must be [i, j] or [i, j, weight]");
        }
        const int a = edge[0].get<int>() - 1;
        const int b = edge[1].get<int>() - 1;
        const double w = edge.size() == 3 ? edge[2].get<double>() : 1.0;
        if (a < 0 || a >= n_g || b < 0 || b >= n_g || a == b) {
            throw ConfigError("cyber edge endpoints out of range");
        }
        if (w < 0) throw ConfigError("cyber edge weights must be nonnegative");
        adj(a, b) = w;
        adj(b, a) = w;
    }
    rc.topo = make_topology(n_k, gen_bus, lines, adj);

    // electrical parameters
    const auto& je = cfg.at("electrical");
    ElectricalParamsPu pu;
    pu.r_g = detail::vec_from_json(je.at("r_g"), "electrical.r_g");
    pu.l_g = detail::vec_from_json(je.at("l_g"), "electrical.l_g");
    pu.r_e = detail::vec_from_json(je.at("r_e"), "electrical.r_e");
    pu.l_e = detail::vec_from_json(je.at("l_e"), "electrical.l_e");
    pu.c_n = detail::vec_from_json(je.at("c_n"), "electrical.c_n");
    pu.g_cte = detail::vec_from_json(je.at("g_cte"), "electrical.g_cte");
    pu.i_cte = detail::vec_from_json(je.at("i_cte"), "electrical.i_cte");
    pu.i_rated = detail::vec_from_json(je.at("i_rated"), "electrical.i_rated");
    pu.bases.r_base = je.at("r_base").get<double>();
    pu.bases.l_base = je.at("l_base").get<double>();
    rc.params.elec = to_si(pu);
    validate_electrical(rc.params.elec, rc.topo);

    // controller parameters
    const auto& jc = cfg.at("controller");
    ControllerParams c;
    c.v_n = jc.at("v_n").get<double>();
    c.mu = jc.at("mu").get<double>();
    c.delta1_frac = jc.at("delta1_frac").get<double>();
    c.k_v = jc.at("k_v").get<double>();
    c.k_p = jc.at("k_p").get<double>();
    c.phi_band = jc.at("phi_band").get<double>();
    c.tau = jc.at("tau").get<double>();
    c.tau_p = jc.at("tau_p").get<double>();
    c.tau_d = jc.at("tau_d").get<double>();
    c.k = jc.at("k").get<double>();
    c.alpha = jc.at("alpha").get<double>();
    c.b = jc.at("b").get<double>();
    c.v_tol = jc.at("v_tol").get<double>();
    c.b_v = jc.at("b_v").get<double>();
    c.b_zeta = jc.at("b_zeta").get<double>();
    rc.params.ctrl = derive_controller_constants(c);

    // scenario
    const auto& js = cfg.at("scenario");
    rc.sim.t_end = js.at("t_end").get<double>();
    rc.sim.dt = js.at("dt").get<double>();
    rc.sim.sample_every = js.at("sample_every").get<int>();
    if (rc.sim.sample_every < 1) throw ConfigError("scenario.sample_every must be >= 1");
    rc.scenario.events.clear();
    bool has_enable = false;
    for (const auto& ev : js.at("events")) {
        ScenarioEvent parsed = detail::event_from_json(ev);
        if (parsed.kind == EventKind::controller_enable) has_enable = true;
        if (parsed.index >= rc.topo.n_k &&
            (parsed.kind == EventKind::load_icte_scale ||
             parsed.kind == EventKind::load_g_scale ||
             parsed.kind == EventKind::load_disconnect ||
             parsed.kind == EventKind::load_reconnect)) {
            throw ConfigError("event references bus beyond topology");
        }
        rc.scenario.events.push_back(parsed);
    }
    rc.controller_initially_enabled = !has_enable;

    // solver + certificate settings
    rc.newton_tol = cfg.at("solver").at("newton_tol").get<double>();
    rc.newton_max_iter = cfg.at("solver").at("max_iter").get<int>();
    const auto& jcert = cfg.at("certificate");
    rc.certificate.consensus_points = jcert.at("consensus_points").get<int>();
    rc.certificate.lo = jcert.at("range")[0].get<double>();
    rc.certificate.hi = jcert.at("range")[1].get<double>();
    rc.certificate.random_points = jcert.at("random_points").get<int>();
    rc.certificate.margin = jcert.at("margin").get<double>();
    rc.certificate.fd_step = jcert.at("fd_step").get<double>();
    rc.certificate.seed = jcert.at("seed").get<std::uint64_t>();
    return rc;
}

/// Builds the run configuration: preset base, optional config file overlay,
/// then dotted-path overrides (e.g. controller.alpha=1e-11).
inline RunConfig load_config(const std::optional<std::string>& path,
                             const std::string& preset_name,
                             const std::vector<std::string>& overrides) {
    const std::string preset = preset_name.empty() ? "table1" : preset_name;
    json cfg = preset_json(preset);
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("cannot open config file '" + *path + "'");
        json file_cfg;
        try {
            file_cfg = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        detail::strict_merge(cfg, file_cfg, "");
    }
    for (const auto& ov : overrides) {
        detail::apply_override(cfg, ov);
    }
    return config_from_json(std::move(cfg), preset);
}

/// Derives a RunConfig with one numeric key replaced (sweep support).
inline RunConfig with_value(const RunConfig& base, const std::string& dotted_key,
                            double value) {
    json cfg = base.resolved;
    json* node = &cfg;
    std::stringstream ss(dotted_key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("empty sweep key");
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i])) {
            throw ConfigError("unknown config key '" + dotted_key + "'");
        }
        node = &(*node)[parts[i]];
    }
    if (!node->contains(parts.back()) || !(*node)[parts.back()].is_number()) {
        throw ConfigError("sweep key '" + dotted_key + "' is not a numeric config value");
    }
    (*node)[parts.back()] = value;
    return config_from_json(std::move(cfg), base.preset);
}

}  // namespace mgrid
