#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tqbsde/constants.hpp"
#include "tqbsde/errors.hpp"
#include "tqbsde/fixedpoint.hpp"
#include "tqbsde/global_solver.hpp"
#include "tqbsde/model.hpp"
#include "tqbsde/pathdep.hpp"

namespace tqbsde {

struct NumericsConfig {
    std::size_t paths = 10000;
    std::size_t steps = 25;
    std::uint64_t seed = 1;
    int basis_degree = 2;
    double ridge = -1.0;  // -1 = automatic
    double tol = -1.0;    // -1 = 1e-4 (1 + |xi|)
    int max_iter = 25;
    double outer_tol = -1.0;  // -1 = 1e-3 (1 + |xi|)
    int outer_max_iter = 15;
    std::string backend = "colehopf";
};

struct ProvidersConfig {
    std::string kazamaki = "surrogate";  // surrogate | custom-table
    std::string delta_table;
    std::string Delta_table;
    double L4 = -1.0;  // -1 = surrogate value
};

struct OutputConfig {
    std::string path = "-";
    std::string format = "json";  // json | csv
};

struct RunConfig {
    ProblemSpec problem;
    std::vector<PathFunctional> functionals;  // empty or n entries
    double delay_epsilon = -1.0;              // <= 0 means unset
    NumericsConfig numerics;
    ProvidersConfig providers;
    OutputConfig output;

    BasisSpec basis() const {
        BasisSpec b;
        b.kind = functionals.empty() ? BasisKind::polynomial
                                     : BasisKind::polynomial_with_functionals;
        b.degree = numerics.basis_degree;
        b.ridge = numerics.ridge;
        return b;
    }
    double picard_tol() const {
        return numerics.tol > 0.0 ? numerics.tol : default_picard_tol(problem);
    }
    double outer_tol() const {
        return numerics.outer_tol > 0.0 ? numerics.outer_tol
                                        : default_outer_tol(problem);
    }
    Backend backend() const {
        if (numerics.backend == "colehopf") return Backend::colehopf;
        if (numerics.backend == "euler") return Backend::euler;
        throw ConfigError("unknown backend '" + numerics.backend + "'",
                          "numerics.backend");
    }
    ConstantProviders make_providers() const {
        if (providers.kazamaki == "surrogate") return surrogate_providers();
        if (providers.kazamaki == "custom-table")
            return table_providers(providers.delta_table, providers.Delta_table,
                                   providers.L4);
        throw ConfigError("unknown provider '" + providers.kazamaki + "'",
                          "providers.kazamaki");
    }
};

namespace cfg {

using nlohmann::json;

inline void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError("expected an object", path);
}

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known) throw ConfigError("unknown key", path + "." + it.key());
    }
}

inline double get_number(const json& obj, const std::string& path, const char* key,
                         double lo, double hi, std::optional<double> def = {}) {
    if (!obj.contains(key)) {
        if (def) return *def;
        throw ConfigError("missing required key", path + "." + key);
    }
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError("expected a number", path + "." + key);
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi))
        throw ConfigError("value " + std::to_string(x) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]",
                          path + "." + key);
    return x;
}

inline long get_integer(const json& obj, const std::string& path, const char* key,
                        long lo, long hi, std::optional<long> def = {}) {
    if (!obj.contains(key)) {
        if (def) return *def;
        throw ConfigError("missing required key", path + "." + key);
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer())
        throw ConfigError("expected an integer", path + "." + key);
    const long x = v.get<long>();
    if (x < lo || x > hi)
        throw ConfigError("value " + std::to_string(x) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]",
                          path + "." + key);
    return x;
}

inline std::string get_string(const json& obj, const std::string& path, const char* key,
                              std::optional<std::string> def = {}) {
    if (!obj.contains(key)) {
        if (def) return *def;
        throw ConfigError("missing required key", path + "." + key);
    }
    const json& v = obj.at(key);
    if (!v.is_string()) throw ConfigError("expected a string", path + "." + key);
    return v.get<std::string>();
}

inline std::vector<double> get_double_array(const json& obj, const std::string& path,
                                            const char* key) {
    if (!obj.contains(key)) throw ConfigError("missing required key", path + "." + key);
    const json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError("expected an array", path + "." + key);
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError("expected numbers", path + "." + key);
        out.push_back(e.get<double>());
    }
    return out;
}

inline std::vector<int> get_int_array(const json& obj, const std::string& path,
                                      const char* key) {
    if (!obj.contains(key)) throw ConfigError("missing required key", path + "." + key);
    const json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError("expected an array", path + "." + key);
    std::vector<int> out;
    for (const auto& e : v) {
        if (!e.is_number_integer())
            throw ConfigError("expected integers", path + "." + key);
        out.push_back(e.get<int>());
    }
    return out;
}

inline GeneratorDescriptor parse_generator(const json& j, const std::string& path) {
    require_object(j, path);
    check_keys(j, path,
               {"family", "value", "weights", "amplitude", "frequency", "coefficient"});
    const std::string family = get_string(j, path, "family");
    if (family == "zero") return GeneratorDescriptor::zero();
    if (family == "constant")
        return GeneratorDescriptor::constant(get_number(j, path, "value", -1e12, 1e12));
    if (family == "linear_y")
        return GeneratorDescriptor::linear_y(get_double_array(j, path, "weights"));
    if (family == "bounded_sine")
        return GeneratorDescriptor::bounded_sine(
            get_number(j, path, "amplitude", -1e12, 1e12),
            get_number(j, path, "frequency", -1e12, 1e12));
    if (family == "z_power")
        return GeneratorDescriptor::z_power(
            get_number(j, path, "coefficient", -1e12, 1e12));
    if (family == "z_block_quadratic") {
        auto w = get_double_array(j, path, "weights");
        for (double x : w)
            if (x < 0.0)
                throw ConfigError("weights must be nonnegative", path + ".weights");
        return GeneratorDescriptor::z_block_quadratic(std::move(w));
    }
    throw ConfigError("unknown family '" + family + "'", path + ".family");
}

inline json generator_to_json(const GeneratorDescriptor& g) {
    json j;
    switch (g.family) {
        case GeneratorFamily::zero:
            j["family"] = "zero";
            break;
        case GeneratorFamily::constant:
            j["family"] = "constant";
            j["value"] = g.value;
            break;
        case GeneratorFamily::linear_y:
            j["family"] = "linear_y";
            j["weights"] = g.weights;
            break;
        case GeneratorFamily::bounded_sine:
            j["family"] = "bounded_sine";
            j["amplitude"] = g.amplitude;
            j["frequency"] = g.frequency;
            break;
        case GeneratorFamily::z_power:
            j["family"] = "z_power";
            j["coefficient"] = g.coefficient;
            break;
        case GeneratorFamily::z_block_quadratic:
            j["family"] = "z_block_quadratic";
            j["weights"] = g.weights;
            break;
        case GeneratorFamily::callback:
            throw ConfigError("callback generators are not serializable");
    }
    return j;
}

inline TerminalDescriptor parse_terminal(const json& j, const std::string& path) {
    require_object(j, path);
    check_keys(j, path,
               {"kind", "values", "coeffs", "intercepts", "clamps", "scales", "coords"});
    const std::string kind = get_string(j, path, "kind");
    if (kind == "constant")
        return TerminalDescriptor::constant(get_double_array(j, path, "values"));
    if (kind == "clamped_affine")
        return TerminalDescriptor::clamped_affine(get_double_array(j, path, "coeffs"),
                                                  get_double_array(j, path, "intercepts"),
                                                  get_double_array(j, path, "clamps"));
    if (kind == "tanh_of_wt")
        return TerminalDescriptor::tanh_of_wt(get_double_array(j, path, "scales"),
                                              get_int_array(j, path, "coords"));
    if (kind == "clamped_running_max")
        return TerminalDescriptor::clamped_running_max(get_int_array(j, path, "coords"),
                                                       get_double_array(j, path, "clamps"));
    throw ConfigError("unknown terminal kind '" + kind + "'", path + ".kind");
}

inline json terminal_to_json(const TerminalDescriptor& t) {
    json j;
    j["kind"] = terminal_kind_name(t.kind);
    switch (t.kind) {
        case TerminalKind::constant_vec:
            j["values"] = t.values;
            break;
        case TerminalKind::clamped_affine:
            j["coeffs"] = t.coeffs;
            j["intercepts"] = t.intercepts;
            j["clamps"] = t.clamps;
            break;
        case TerminalKind::tanh_of_wt:
            j["scales"] = t.scales;
            j["coords"] = t.coords;
            break;
        case TerminalKind::clamped_running_max:
            j["coords"] = t.coords;
            j["clamps"] = t.clamps;
            break;
    }
    return j;
}

inline PathFunctional parse_functional(const json& j, const std::string& path) {
    require_object(j, path);
    check_keys(j, path, {"kind", "epsilon"});
    const std::string kind = get_string(j, path, "kind");
    const double eps = get_number(j, path, "epsilon", 0.0, 100.0, 0.0);
    if (kind == "delayed_value") return PathFunctional::delayed_value(eps);
    if (kind == "running_max") return PathFunctional::running_max(eps);
    if (kind == "moving_average") return PathFunctional::moving_average(eps);
    if (kind == "cumulative_integral") return PathFunctional::cumulative_integral(eps);
    throw ConfigError("unknown functional kind '" + kind + "'", path + ".kind");
}

}  // namespace cfg

/// Parses and fully validates a config tree; every unknown key, type mismatch
/// or range violation is rejected with its key path.
inline RunConfig parse_config(const std::string& text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    cfg::require_object(root, "config");
    cfg::check_keys(root, "config", {"problem", "numerics", "providers", "output"});
    if (!root.contains("problem")) throw ConfigError("missing section", "problem");

    RunConfig c;
    const auto& pj = root.at("problem");
    cfg::require_object(pj, "problem");
    cfg::check_keys(pj, "problem",
                    {"n", "d", "horizon", "lipschitz_C", "alpha", "terminal", "l", "k",
                     "h", "global_flags", "functionals", "epsilon"});
    c.problem.n = static_cast<int>(cfg::get_integer(pj, "problem", "n", 1, 16));
    c.problem.d = static_cast<int>(cfg::get_integer(pj, "problem", "d", 1, 16));
    c.problem.horizon = cfg::get_number(pj, "problem", "horizon", 1e-300, 100.0);
    c.problem.lipschitz_C = cfg::get_number(pj, "problem", "lipschitz_C", 0.0, 100.0);
    if (pj.contains("alpha")) {
        if (!pj.at("alpha").is_number())
            throw ConfigError("expected a number", "problem.alpha");
        const double a = pj.at("alpha").get<double>();
        if (!(a >= -1.0 && a < 1.0))
            throw ConfigError("alpha must lie in [-1, 1)", "problem.alpha");
        c.problem.alpha = a;
    }
    if (!pj.contains("terminal")) throw ConfigError("missing key", "problem.terminal");
    c.problem.terminal = cfg::parse_terminal(pj.at("terminal"), "problem.terminal");

    auto parse_parts = [&](const char* key, std::size_t expected,
                           std::vector<GeneratorDescriptor>& out) {
        const std::string path = std::string("problem.") + key;
        if (!pj.contains(key)) {
            if (expected == 0) return;
            throw ConfigError("missing key", path);
        }
        const auto& arr = pj.at(key);
        if (!arr.is_array()) throw ConfigError("expected an array", path);
        if (arr.size() != expected)
            throw ConfigError("expected " + std::to_string(expected) + " entries, got " +
                                  std::to_string(arr.size()),
                              path);
        for (std::size_t i = 0; i < arr.size(); ++i)
            out.push_back(
                cfg::parse_generator(arr[i], path + "[" + std::to_string(i) + "]"));
    };
    const auto un = static_cast<std::size_t>(c.problem.n);
    parse_parts("l", un, c.problem.l_parts);
    parse_parts("k", un - 1, c.problem.k_parts);
    parse_parts("h", un, c.problem.h_parts);

    if (pj.contains("global_flags")) {
        const auto& gf = pj.at("global_flags");
        cfg::require_object(gf, "problem.global_flags");
        cfg::check_keys(gf, "problem.global_flags", {"h_nonpositive", "l_bounded"});
        if (gf.contains("h_nonpositive")) {
            if (!gf.at("h_nonpositive").is_boolean())
                throw ConfigError("expected a bool", "problem.global_flags.h_nonpositive");
            c.problem.global_flags.h_nonpositive = gf.at("h_nonpositive").get<bool>();
        }
        if (gf.contains("l_bounded")) {
            if (!gf.at("l_bounded").is_boolean())
                throw ConfigError("expected a bool", "problem.global_flags.l_bounded");
            c.problem.global_flags.l_bounded = gf.at("l_bounded").get<bool>();
        }
    }
    if (pj.contains("functionals")) {
        const auto& fj = pj.at("functionals");
        if (!fj.is_array()) throw ConfigError("expected an array", "problem.functionals");
        if (fj.size() != un)
            throw ConfigError("expected n functionals", "problem.functionals");
        for (std::size_t i = 0; i < fj.size(); ++i)
            c.functionals.push_back(cfg::parse_functional(
                fj[i], "problem.functionals[" + std::to_string(i) + "]"));
    }
    if (pj.contains("epsilon"))
        c.delay_epsilon = cfg::get_number(pj, "problem", "epsilon", 0.0, 100.0);

    c.problem.check_structure();

    if (root.contains("numerics")) {
        const auto& nj = root.at("numerics");
        cfg::require_object(nj, "numerics");
        cfg::check_keys(nj, "numerics",
                        {"paths", "steps", "seed", "basis_degree", "ridge", "tol",
                         "max_iter", "outer_tol", "outer_max_iter", "backend"});
        c.numerics.paths = static_cast<std::size_t>(
            cfg::get_integer(nj, "numerics", "paths", 1, 100000000, 10000));
        c.numerics.steps = static_cast<std::size_t>(
            cfg::get_integer(nj, "numerics", "steps", 1, 1000000, 25));
        c.numerics.seed = static_cast<std::uint64_t>(
            cfg::get_integer(nj, "numerics", "seed", 0, 9007199254740992L, 1));
        c.numerics.basis_degree = static_cast<int>(
            cfg::get_integer(nj, "numerics", "basis_degree", 0, 6, 2));
        c.numerics.ridge = cfg::get_number(nj, "numerics", "ridge", -1.0, 1e6, -1.0);
        c.numerics.tol = cfg::get_number(nj, "numerics", "tol", -1.0, 1e6, -1.0);
        c.numerics.max_iter = static_cast<int>(
            cfg::get_integer(nj, "numerics", "max_iter", 1, 10000, 25));
        c.numerics.outer_tol =
            cfg::get_number(nj, "numerics", "outer_tol", -1.0, 1e6, -1.0);
        c.numerics.outer_max_iter = static_cast<int>(
            cfg::get_integer(nj, "numerics", "outer_max_iter", 1, 10000, 15));
        c.numerics.backend =
            cfg::get_string(nj, "numerics", "backend", std::string("colehopf"));
        if (c.numerics.backend != "colehopf" && c.numerics.backend != "euler")
            throw ConfigError("backend must be colehopf or euler", "numerics.backend");
    }
    if (root.contains("providers")) {
        const auto& vj = root.at("providers");
        cfg::require_object(vj, "providers");
        cfg::check_keys(vj, "providers", {"kazamaki", "delta_table", "Delta_table", "L4"});
        c.providers.kazamaki =
            cfg::get_string(vj, "providers", "kazamaki", std::string("surrogate"));
        if (c.providers.kazamaki != "surrogate" &&
            c.providers.kazamaki != "custom-table")
            throw ConfigError("kazamaki must be surrogate or custom-table",
                              "providers.kazamaki");
        c.providers.delta_table =
            cfg::get_string(vj, "providers", "delta_table", std::string());
        c.providers.Delta_table =
            cfg::get_string(vj, "providers", "Delta_table", std::string());
        c.providers.L4 = cfg::get_number(vj, "providers", "L4", -1.0, 1e6, -1.0);
        if (c.providers.kazamaki == "custom-table" &&
            (c.providers.delta_table.empty() || c.providers.Delta_table.empty()))
            throw ConfigError("custom-table providers need delta_table and Delta_table",
                              "providers");
    }
    if (root.contains("output")) {
        const auto& oj = root.at("output");
        cfg::require_object(oj, "output");
        cfg::check_keys(oj, "output", {"path", "format"});
        c.output.path = cfg::get_string(oj, "output", "path", std::string("-"));
        c.output.format = cfg::get_string(oj, "output", "format", std::string("json"));
        if (c.output.format != "json" && c.output.format != "csv" &&
            c.output.format != "table")
            throw ConfigError("format must be json, csv or table", "output.format");
    }
    return c;
}

/// Canonical serialization; parse_config(serialize_config(c)) reproduces c.
inline std::string serialize_config(const RunConfig& c) {
    nlohmann::json root;
    nlohmann::json pj;
    pj["n"] = c.problem.n;
    pj["d"] = c.problem.d;
    pj["horizon"] = c.problem.horizon;
    pj["lipschitz_C"] = c.problem.lipschitz_C;
    pj["alpha"] = c.problem.alpha;
    pj["terminal"] = cfg::terminal_to_json(c.problem.terminal);
    nlohmann::json lj = nlohmann::json::array(), kj = nlohmann::json::array(),
                   hj = nlohmann::json::array();
    for (const auto& g : c.problem.l_parts) lj.push_back(cfg::generator_to_json(g));
    for (const auto& g : c.problem.k_parts) kj.push_back(cfg::generator_to_json(g));
    for (const auto& g : c.problem.h_parts) hj.push_back(cfg::generator_to_json(g));
    pj["l"] = lj;
    pj["k"] = kj;
    pj["h"] = hj;
    pj["global_flags"] = {{"h_nonpositive", c.problem.global_flags.h_nonpositive},
                          {"l_bounded", c.problem.global_flags.l_bounded}};
    if (!c.functionals.empty()) {
        nlohmann::json fj = nlohmann::json::array();
        for (const auto& g : c.functionals)
            fj.push_back({{"kind", functional_kind_name(g.kind)}, {"epsilon", g.epsilon}});
        pj["functionals"] = fj;
    }
    if (c.delay_epsilon >= 0.0) pj["epsilon"] = c.delay_epsilon;
    root["problem"] = pj;
    root["numerics"] = {{"paths", c.numerics.paths},
                        {"steps", c.numerics.steps},
                        {"seed", c.numerics.seed},
                        {"basis_degree", c.numerics.basis_degree},
                        {"ridge", c.numerics.ridge},
                        {"tol", c.numerics.tol},
                        {"max_iter", c.numerics.max_iter},
                        {"outer_tol", c.numerics.outer_tol},
                        {"outer_max_iter", c.numerics.outer_max_iter},
                        {"backend", c.numerics.backend}};
    nlohmann::json vj = {{"kazamaki", c.providers.kazamaki}};
    if (!c.providers.delta_table.empty()) vj["delta_table"] = c.providers.delta_table;
    if (!c.providers.Delta_table.empty()) vj["Delta_table"] = c.providers.Delta_table;
    if (c.providers.L4 >= 0.0) vj["L4"] = c.providers.L4;
    root["providers"] = vj;
    root["output"] = {{"path", c.output.path}, {"format", c.output.format}};
    return root.dump(2) + "\n";
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// result serialization

namespace io {

/// JSON cannot carry IEEE specials; map them to strings.
inline nlohmann::json num(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

inline nlohmann::json constants_to_json(const ConstantsReport& r) {
    nlohmann::json j;
    j["Delta_star"] = num(r.Delta_star);
    j["delta_star"] = num(r.delta_star);
    j["A"] = num(r.A);
    j["B"] = num(r.B);
    j["eta"] = num(r.eta);
    j["Delta_bar"] = num(r.Delta_bar);
    j["delta_bar"] = num(r.delta_bar);
    j["Abar"] = num(r.Abar);
    j["Bbar"] = num(r.Bbar);
    j["Cbar"] = num(r.Cbar);
    j["etabar1"] = num(r.etabar1);
    j["etabar2"] = num(r.etabar2);
    j["K1"] = num(r.K1);
    j["K2"] = num(r.K2);
    j["lambda"] = num(r.lambda);
    j["eta_lambda"] = num(r.eta_lambda);
    j["beta_bar"] = num(r.beta_bar);
    j["Delta_tilde"] = num(r.Delta_tilde);
    j["delta_tilde"] = num(r.delta_tilde);
    j["epsilon0"] = num(r.epsilon0);
    j["provider_name"] = r.provider_name;
    j["notes"] = r.notes;
    return j;
}

inline nlohmann::json validation_to_json(const ValidationReport& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"assumption_id", c.assumption_id},
                          {"probes_run", c.probes_run},
                          {"worst_violation", num(c.worst_violation)},
                          {"pass", c.pass}});
    return {{"checks", checks},
            {"probe_seed", r.probe_seed},
            {"tolerance", num(r.tolerance)},
            {"all_pass", r.all_pass()}};
}

inline nlohmann::json fixed_point_to_json(const FixedPointReport& r) {
    nlohmann::json its = nlohmann::json::array();
    for (const auto& it : r.iterations)
        its.push_back({{"dY_sup", num(it.dY_sup)},
                       {"dZ_bmo_sq", num(it.dZ_bmo_sq)},
                       {"combined", num(it.combined)},
                       {"ratio", num(it.ratio)}});
    nlohmann::json j;
    j["iterations"] = its;
    j["converged"] = r.converged;
    j["tol"] = num(r.tol);
    j["bound_checks"] = {{"y_sup", num(r.y_sup)},
                         {"A", num(r.bound_A)},
                         {"y_sup_ok", r.y_sup_ok},
                         {"z_bmo_sq", num(r.z_bmo_sq)},
                         {"B_sq", num(r.bound_B_sq)},
                         {"z_bmo_ok", r.z_bmo_ok},
                         {"tolerance", num(3.0 * r.mc_se + 1e-12)}};
    j["eta_satisfied"] = r.eta_satisfied;
    j["eta"] = num(r.eta);
    j["mc_se"] = num(r.mc_se);
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

inline nlohmann::json global_to_json(const GlobalReport& r) {
    nlohmann::json j;
    j["lambda"] = num(r.plan.lambda);
    j["eta_lambda"] = num(r.plan.eta_lambda);
    j["intervals"] = r.plan.intervals;
    j["knots"] = r.plan.knots;
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& rep : r.interval_reports) reps.push_back(fixed_point_to_json(rep));
    j["interval_reports"] = reps;
    j["beta_margin"] = num(r.beta_margin);
    j["beta_ok"] = r.beta_ok;
    j["z_bmo_sq"] = num(r.z_bmo_sq);
    j["bmo_bound"] = num(r.bmo_bound);
    j["bmo_ok"] = r.bmo_ok;
    j["bound_tolerance"] = num(r.bound_tolerance);
    j["knot_discontinuity"] = num(r.knot_discontinuity);
    return j;
}

inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
    if (path == "-" || path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open output path " + path);
    out << text;
}

}  // namespace io

// ---------------------------------------------------------------------------
// benchmark harness

struct BenchmarkRow {
    std::string name;
    std::size_t paths = 0;
    std::size_t steps = 0;
    double y0_error = std::numeric_limits<double>::quiet_NaN();
    double z_error = std::numeric_limits<double>::quiet_NaN();
    double last_ratio = std::numeric_limits<double>::quiet_NaN();
    double y_margin = std::numeric_limits<double>::quiet_NaN();
    double bmo_margin = std::numeric_limits<double>::quiet_NaN();
    double wall_seconds = 0.0;
    std::string status = "ok";
};

namespace bench {

struct Case {
    std::string name;
    RunConfig config;
    std::vector<double> y0_true;
    // per-component expected mean control value (constant benchmarks)
    std::vector<double> z_true;
    bool use_global = false;
};

inline RunConfig base_config() {
    RunConfig c;
    c.problem.n = 1;
    c.problem.d = 1;
    c.problem.horizon = 0.25;
    c.problem.lipschitz_C = 0.0;
    c.problem.alpha = 0.0;
    c.problem.terminal = TerminalDescriptor::clamped_affine({1.0}, {0.0}, {3.0});
    c.problem.l_parts = {GeneratorDescriptor::zero()};
    c.problem.h_parts = {GeneratorDescriptor::zero()};
    c.problem.check_structure();
    c.numerics.paths = 20000;
    c.numerics.steps = 32;
    c.numerics.seed = 7;
    return c;
}

inline Case scalar_wt() {
    Case cs;
    cs.name = "scalar_wt";
    cs.config = base_config();
    cs.y0_true = {0.5 * cs.config.problem.horizon};
    cs.z_true = {1.0};
    return cs;
}

inline Case scalar_drift() {
    Case cs;
    cs.name = "scalar_drift";
    cs.config = base_config();
    cs.config.problem.lipschitz_C = 0.5;
    cs.config.problem.l_parts = {GeneratorDescriptor::constant(0.3)};
    cs.config.problem.check_structure();
    cs.y0_true = {(0.5 + 0.3) * cs.config.problem.horizon};
    cs.z_true = {1.0};
    return cs;
}

inline Case triangular_n2() {
    Case cs;
    cs.name = "triangular_n2";
    cs.config = base_config();
    auto& p = cs.config.problem;
    p.n = 2;
    p.terminal = TerminalDescriptor::clamped_affine({1.0, 0.0}, {0.0, 0.0}, {3.0, 0.0});
    p.lipschitz_C = 1.0;
    p.l_parts = {GeneratorDescriptor::zero(), GeneratorDescriptor::zero()};
    p.h_parts = {GeneratorDescriptor::zero(), GeneratorDescriptor::zero()};
    p.k_parts = {GeneratorDescriptor::z_block_quadratic({1.0})};
    p.check_structure();
    cs.y0_true = {0.5 * p.horizon, -p.horizon};
    cs.z_true = {1.0, 0.0};
    return cs;
}

inline Case constant_h_scalar() {
    Case cs;
    cs.name = "constant_h_scalar";
    cs.config = base_config();
    auto& p = cs.config.problem;
    p.lipschitz_C = 0.5;
    p.terminal = TerminalDescriptor::constant({0.0});
    p.h_parts = {GeneratorDescriptor::constant(-0.4)};
    p.global_flags.h_nonpositive = true;
    p.global_flags.l_bounded = true;
    p.check_structure();
    cs.y0_true = {-0.4 * p.horizon};
    cs.z_true = {0.0};
    return cs;
}

inline Case manufactured_n2_zero_control() {
    Case cs;
    cs.name = "manufactured_n2";
    cs.config = base_config();
    auto& p = cs.config.problem;
    p.n = 2;
    p.lipschitz_C = 1.0;
    p.terminal = TerminalDescriptor::constant({0.0, 0.0});
    p.l_parts = {GeneratorDescriptor::zero(), GeneratorDescriptor::zero()};
    p.h_parts = {GeneratorDescriptor::constant(-0.25),
                 GeneratorDescriptor::constant(-0.5)};
    p.k_parts = {GeneratorDescriptor::z_block_quadratic({1.0})};
    p.global_flags.h_nonpositive = true;
    p.global_flags.l_bounded = true;
    p.check_structure();
    cs.y0_true = {-0.25 * p.horizon, -0.5 * p.horizon};
    cs.z_true = {0.0, 0.0};
    return cs;
}

inline std::vector<Case> suite_cases(const std::string& suite,
                                     std::optional<std::size_t> paths_override,
                                     std::optional<std::size_t> steps_override) {
    auto apply = [&](std::vector<Case> cases) {
        for (auto& cs : cases) {
            if (paths_override) cs.config.numerics.paths = *paths_override;
            if (steps_override) cs.config.numerics.steps = *steps_override;
        }
        return cases;
    };
    if (suite == "closed-form")
        return apply({scalar_wt(), scalar_drift(), triangular_n2()});
    if (suite == "manufactured")
        return apply({constant_h_scalar(), manufactured_n2_zero_control()});
    if (suite == "convergence") {
        // overrides set the base of the doubling ladder
        std::vector<Case> out;
        Case base = scalar_wt();
        std::size_t M = paths_override.value_or(2500);
        std::size_t N = steps_override.value_or(8);
        for (int r = 0; r < 4; ++r) {
            Case cs = base;
            cs.name = "scalar_wt_r" + std::to_string(r);
            cs.config.numerics.paths = M;
            cs.config.numerics.steps = N;
            out.push_back(cs);
            M *= 2;
            N *= 2;
        }
        return out;
    }
    throw ConfigError("unknown benchmark suite '" + suite +
                      "' (closed-form | manufactured | convergence)");
}

}  // namespace bench

/// Runs a named suite and returns one row per case; failures are reported in
/// the row status and do not stop the table.
inline std::vector<BenchmarkRow> benchmark(const std::string& suite,
                                           std::optional<std::size_t> paths_override = {},
                                           std::optional<std::size_t> steps_override = {},
                                           std::optional<std::uint64_t> seed_override = {}) {
    std::vector<BenchmarkRow> rows;
    for (auto& cs : bench::suite_cases(suite, paths_override, steps_override)) {
        if (seed_override) cs.config.numerics.seed = *seed_override;
        BenchmarkRow row;
        row.name = cs.name;
        row.paths = cs.config.numerics.paths;
        row.steps = cs.config.numerics.steps;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto& nc = cs.config.numerics;
            const ConstantProviders providers = cs.config.make_providers();
            const TimeGrid grid = make_grid(cs.config.problem.horizon, nc.steps);
            const BrownianBundle bundle =
                simulate_brownian(grid, nc.paths, static_cast<std::size_t>(cs.config.problem.d),
                                  nc.seed);
            PicardOutcome res =
                run_picard(cs.config.problem, bundle, cs.config.basis(),
                           cs.config.picard_tol(), nc.max_iter, providers,
                           cs.config.backend());
            double y0_err = 0.0;
            for (std::size_t i = 0; i < cs.y0_true.size(); ++i)
                y0_err = std::max(y0_err, std::fabs(res.report.y0[i] - cs.y0_true[i]));
            row.y0_error = y0_err;
            double z_err = 0.0;
            const auto& Z = res.pair.Z;
            for (std::size_t i = 0; i < cs.z_true.size(); ++i) {
                double sum = 0.0;
                std::size_t count = 0;
                for (std::size_t m = 0; m < Z.dim0(); ++m)
                    for (std::size_t k = 0; k < Z.dim1(); ++k)
                        for (std::size_t j = 0; j < Z.dim3(); ++j) {
                            sum += Z(m, k, i, j);
                            ++count;
                        }
                z_err = std::max(z_err, std::fabs(sum / static_cast<double>(count) -
                                                  cs.z_true[i]));
            }
            row.z_error = z_err;
            row.last_ratio = res.report.iterations.size() >= 2
                                 ? res.report.iterations.back().ratio
                                 : 0.0;
            row.y_margin = res.report.bound_A - res.report.y_sup;
            row.bmo_margin = res.report.bound_B_sq - res.report.z_bmo_sq;
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
        }
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(row);
    }
    return rows;
}

/// CSV table: 17 significant digits, '.' decimal separator, '\n' endings.
inline std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
    std::string out =
        "case,paths,steps,y0_error,z_error,ratio,y_margin,bmo_margin,wall_seconds,"
        "status\n";
    for (const auto& r : rows) {
        out += r.name + ',' + std::to_string(r.paths) + ',' + std::to_string(r.steps) +
               ',' + io::format_g17(r.y0_error) + ',' + io::format_g17(r.z_error) + ',' +
               io::format_g17(r.last_ratio) + ',' + io::format_g17(r.y_margin) + ',' +
               io::format_g17(r.bmo_margin) + ',' + io::format_g17(r.wall_seconds) +
               ',' + r.status + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// command driver

namespace io {

inline nlohmann::json y0_to_json(const std::vector<double>& y0,
                                 const std::vector<double>& se) {
    return {{"mean", y0}, {"se", se}};
}

inline std::string constants_table(const ConstantsReport& r) {
    const std::vector<std::pair<std::string, double>> entries = {
        {"Delta_star", r.Delta_star}, {"delta_star", r.delta_star},
        {"A", r.A},                   {"B", r.B},
        {"eta", r.eta},               {"Delta_bar", r.Delta_bar},
        {"delta_bar", r.delta_bar},   {"Abar", r.Abar},
        {"Bbar", r.Bbar},             {"Cbar", r.Cbar},
        {"etabar1", r.etabar1},       {"etabar2", r.etabar2},
        {"K1", r.K1},                 {"K2", r.K2},
        {"lambda", r.lambda},         {"eta_lambda", r.eta_lambda},
        {"beta_bar", r.beta_bar},     {"Delta_tilde", r.Delta_tilde},
        {"delta_tilde", r.delta_tilde}, {"epsilon0", r.epsilon0}};
    std::string out;
    for (const auto& [k, v] : entries) {
        char line[96];
        std::snprintf(line, sizeof(line), "%-12s %-24.17g %s\n", k.c_str(), v,
                      constant_unit(k));
        out += line;
    }
    out += "provider     " + r.provider_name + "\n";
    for (const auto& note : r.notes) out += "note         " + note + "\n";
    return out;
}

inline std::string result_csv(const std::vector<double>& y0,
                              const std::vector<double>& se) {
    std::string out = "component,y0,se\n";
    for (std::size_t i = 0; i < y0.size(); ++i)
        out += std::to_string(i + 1) + ',' + format_g17(y0[i]) + ',' +
               format_g17(se[i]) + '\n';
    return out;
}

}  // namespace io

/// Executes one CLI invocation. args excludes the program name.
/// Exit codes: 0 success, 2 validation failure, 3 solver failure or bound
/// breach, 4 config error.
inline int run_command(std::vector<std::string> args) {
    CLI::App app{"Monte Carlo solver for coupled quadratic BSDE systems"};
    app.require_subcommand(1);

    std::string config_path, out_override, format_override, suite = "closed-form";
    std::optional<std::uint64_t> seed_override;
    std::optional<std::size_t> paths_override, steps_override;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", config_path, "config file path");
        if (config_required) opt->required();
        sub->add_option("--seed", [&](const std::vector<std::string>& v) {
            seed_override = std::stoull(v.at(0));
            return true;
        }, "seed override");
        sub->add_option("--paths", [&](const std::vector<std::string>& v) {
            paths_override = std::stoull(v.at(0));
            return true;
        }, "path count override");
        sub->add_option("--steps", [&](const std::vector<std::string>& v) {
            steps_override = std::stoull(v.at(0));
            return true;
        }, "step count override");
        sub->add_option("--out", out_override, "output path override ('-' = stdout)");
        sub->add_option("--format", format_override, "output format override");
    };

    CLI::App* cmd_constants = app.add_subcommand("constants", "print the constants report");
    CLI::App* cmd_validate = app.add_subcommand("validate", "run assumption validators");
    CLI::App* cmd_local = app.add_subcommand("solve-local", "short-horizon Picard solve");
    CLI::App* cmd_global = app.add_subcommand("solve-global", "stitched global solve");
    CLI::App* cmd_pathdep =
        app.add_subcommand("solve-pathdep", "path-dependent local solve");
    CLI::App* cmd_delay = app.add_subcommand("solve-delay", "delayed-value solve");
    CLI::App* cmd_bench = app.add_subcommand("benchmark", "run a benchmark suite");
    for (CLI::App* sub :
         {cmd_constants, cmd_validate, cmd_local, cmd_global, cmd_pathdep, cmd_delay})
        add_common(sub, true);
    add_common(cmd_bench, false);
    cmd_bench->add_option("--suite", suite,
                          "closed-form | manufactured | convergence");

    std::vector<const char*> argv;
    argv.push_back("tqbsde");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success))
            return app.exit(e);
        std::ostringstream err;
        err << "{\"error\": \"argument error\", \"detail\": \"" << e.what() << "\"}";
        std::cerr << err.str() << std::endl;
        return static_cast<int>(ExitCode::config_error);
    }

    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    };

    try {
        if (cmd_bench->parsed()) {
            auto rows = benchmark(suite, paths_override, steps_override, seed_override);
            const std::string out_path = out_override.empty() ? "-" : out_override;
            io::write_text(out_path, benchmark_csv(rows));
            for (const auto& r : rows)
                if (r.status != "ok") return static_cast<int>(ExitCode::solver_failure);
            return 0;
        }

        RunConfig config = parse_config_file(config_path);
        if (seed_override) config.numerics.seed = *seed_override;
        if (paths_override) config.numerics.paths = *paths_override;
        if (steps_override) config.numerics.steps = *steps_override;
        if (!out_override.empty()) config.output.path = out_override;
        if (!format_override.empty()) {
            if (format_override != "json" && format_override != "csv" &&
                format_override != "table")
                throw ConfigError("format must be json, csv or table", "--format");
            config.output.format = format_override;
        }
        const ConstantProviders providers = config.make_providers();
        const auto& nc = config.numerics;

        nlohmann::json result;
        result["config"] = nlohmann::json::parse(serialize_config(config));

        if (cmd_constants->parsed()) {
            const ConstantsReport rep = full_constants_report(config.problem, providers);
            result["command"] = "constants";
            result["constants"] = io::constants_to_json(rep);
            result["timing"] = {{"wall_seconds", elapsed()}};
            if (config.output.format == "table")
                io::write_text(config.output.path, io::constants_table(rep));
            else
                io::write_text(config.output.path, result.dump(2) + "\n");
            return 0;
        }

        // every other command starts from the assumption validators
        ValidationReport validation =
            validate_assumptions(config.problem, 2000, nc.seed);
        if (!config.functionals.empty()) {
            const TimeGrid grid = make_grid(config.problem.horizon, nc.steps);
            for (std::size_t i = 0; i < config.functionals.size(); ++i)
                validation.checks.push_back(validate_functional(
                    config.functionals[i], grid.times,
                    static_cast<std::size_t>(config.problem.n), 200, nc.seed));
        }
        result["validation"] = io::validation_to_json(validation);

        if (cmd_validate->parsed()) {
            result["command"] = "validate";
            if (config.problem.global_flags.h_nonpositive ||
                config.problem.global_flags.l_bounded) {
                const auto hyp = check_global_hypotheses(config.problem);
                result["global_hypotheses"] = {{"pass", hyp.pass},
                                               {"violations", hyp.violations}};
                if (!hyp.pass) {
                    result["timing"] = {{"wall_seconds", elapsed()}};
                    io::write_text(config.output.path, result.dump(2) + "\n");
                    return static_cast<int>(ExitCode::validation_failure);
                }
            }
            result["timing"] = {{"wall_seconds", elapsed()}};
            io::write_text(config.output.path, result.dump(2) + "\n");
            return validation.all_pass() ? 0
                                         : static_cast<int>(ExitCode::validation_failure);
        }

        if (!validation.all_pass()) {
            result["command"] = "validation-gate";
            result["timing"] = {{"wall_seconds", elapsed()}};
            std::cerr << result.dump(2) << std::endl;
            return static_cast<int>(ExitCode::validation_failure);
        }

        const ConstantsReport constants = full_constants_report(config.problem, providers);
        result["constants"] = io::constants_to_json(constants);

        auto finish = [&](const std::vector<double>& y0, const std::vector<double>& se,
                          const char* command) {
            result["command"] = command;
            result["y0"] = io::y0_to_json(y0, se);
            result["timing"] = {{"wall_seconds", elapsed()}};
            if (config.output.format == "csv")
                io::write_text(config.output.path, io::result_csv(y0, se));
            else
                io::write_text(config.output.path, result.dump(2) + "\n");
            return 0;
        };

        if (cmd_local->parsed()) {
            const TimeGrid grid = make_grid(config.problem.horizon, nc.steps);
            const BrownianBundle bundle = simulate_brownian(
                grid, nc.paths, static_cast<std::size_t>(config.problem.d), nc.seed);
            try {
                PicardOutcome res =
                    run_picard(config.problem, bundle, config.basis(),
                               config.picard_tol(), nc.max_iter, providers,
                               config.backend());
                result["fixed_point"] = io::fixed_point_to_json(res.report);
                return finish(res.report.y0, res.report.y0_se, "solve-local");
            } catch (const PicardError& e) {
                result["fixed_point"] = io::fixed_point_to_json(e.report);
                result["error"] = e.what();
                std::cerr << result.dump(2) << std::endl;
                return static_cast<int>(ExitCode::solver_failure);
            }
        }

        if (cmd_global->parsed()) {
            const auto hyp = check_global_hypotheses(config.problem);
            result["global_hypotheses"] = {{"pass", hyp.pass},
                                           {"violations", hyp.violations}};
            if (!hyp.pass) {
                std::cerr << result.dump(2) << std::endl;
                return static_cast<int>(ExitCode::validation_failure);
            }
            GlobalOutcome res = solve_global(
                config.problem, nc.paths, nc.steps, nc.seed, config.basis(),
                config.picard_tol(), nc.max_iter, providers, config.backend());
            result["global"] = io::global_to_json(res.report);
            std::vector<double> y0, se;
            const auto& last = res.report.interval_reports.back();
            y0 = last.y0;
            se = last.y0_se;
            return finish(y0, se, "solve-global");
        }

        if (cmd_pathdep->parsed()) {
            if (config.functionals.empty())
                throw ConfigError("solve-pathdep requires problem.functionals",
                                  "problem.functionals");
            const TimeGrid grid = make_grid(config.problem.horizon, nc.steps);
            const BrownianBundle bundle = simulate_brownian(
                grid, nc.paths, static_cast<std::size_t>(config.problem.d), nc.seed);
            PathdepOutcome res = solve_pathdep_local(
                config.problem, config.functionals, bundle, config.basis(),
                config.picard_tol(), nc.max_iter, providers, config.backend());
            result["fixed_point"] = io::fixed_point_to_json(res.report);
            return finish(res.report.y0, res.report.y0_se, "solve-pathdep");
        }

        if (cmd_delay->parsed()) {
            if (config.functionals.empty())
                throw ConfigError("solve-delay requires problem.functionals",
                                  "problem.functionals");
            if (config.delay_epsilon <= 0.0)
                throw ConfigError("solve-delay requires problem.epsilon > 0",
                                  "problem.epsilon");
            DelayOutcome res = solve_delay(
                config.problem, config.functionals, config.delay_epsilon, nc.paths,
                nc.steps, nc.seed, config.basis(), config.picard_tol(), nc.max_iter,
                config.outer_tol(), nc.outer_max_iter, providers, config.backend());
            result["outer"] = {{"distances", res.report.outer_distances},
                               {"ratios", res.report.outer_ratios},
                               {"converged", res.report.converged},
                               {"epsilon", io::num(res.report.epsilon)},
                               {"epsilon0", io::num(res.report.epsilon0)},
                               {"gamma", io::num(res.report.gamma)}};
            result["global"] = io::global_to_json(res.report.last_inner);
            const auto& last = res.report.last_inner.interval_reports.back();
            return finish(last.y0, last.y0_se, "solve-delay");
        }

        throw ConfigError("no subcommand dispatched");
    } catch (const ConfigError& e) {
        std::cerr << "{\"error\": \"config\", \"detail\": " << nlohmann::json(e.what())
                  << "}" << std::endl;
        return static_cast<int>(ExitCode::config_error);
    } catch (const ValidationError& e) {
        std::cerr << "{\"error\": \"validation\", \"detail\": "
                  << nlohmann::json(e.what()) << "}" << std::endl;
        return static_cast<int>(ExitCode::validation_failure);
    } catch (const Error& e) {
        std::cerr << "{\"error\": \"solver\", \"detail\": " << nlohmann::json(e.what())
                  << "}" << std::endl;
        return static_cast<int>(e.exit_code);
    } catch (const std::exception& e) {
        std::cerr << "{\"error\": \"internal\", \"detail\": " << nlohmann::json(e.what())
                  << "}" << std::endl;
        return static_cast<int>(ExitCode::solver_failure);
    }
}

}  // namespace tqbsde
