#pragma once

#include <Eigen/Core>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "opgp/errors.hpp"
#include "opgp/functionals.hpp"
#include "opgp/interval.hpp"
#include "opgp/kernels.hpp"

namespace opgp {

// ---------------------------------------------------------------------------
// TOML-subset parsing. The experiment format needs only [section],
// [[array-of-tables]], scalar key = value pairs, flat single-line arrays and
// # comments, so the parser covers exactly that and converts to JSON;
// .json files encode the identical structure and share the validator below.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        else if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline nlohmann::json parse_toml_scalar(const std::string& raw, int lineno) {
    const std::string v = trim(raw);
    if (v.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw ConfigError("line " + std::to_string(lineno) + ": unterminated string");
        return v.substr(1, v.size() - 2);
    }
    if (v == "true") return true;
    if (v == "false") return false;
    try {
        std::size_t used = 0;
        if (v.find_first_of(".eE") == std::string::npos) {
            const long long i = std::stoll(v, &used);
            if (used == v.size()) return i;
        }
        const double d = std::stod(v, &used);
        if (used != v.size())
            throw ConfigError("line " + std::to_string(lineno) + ": bad number '" + v + "'");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(lineno) + ": cannot parse value '" + v + "'");
    }
}

inline nlohmann::json parse_toml_value(const std::string& raw, int lineno) {
    const std::string v = trim(raw);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']')
            throw ConfigError("line " + std::to_string(lineno) +
                              ": arrays must open and close on one line");
        nlohmann::json arr = nlohmann::json::array();
        std::string body = v.substr(1, v.size() - 2);
        std::string item;
        bool in_string = false;
        for (char c : body) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                if (!trim(item).empty()) arr.push_back(parse_toml_scalar(item, lineno));
                item.clear();
            } else {
                item += c;
            }
        }
        if (!trim(item).empty()) arr.push_back(parse_toml_scalar(item, lineno));
        return arr;
    }
    return parse_toml_scalar(v, lineno);
}

} // namespace detail

inline nlohmann::json parse_toml_subset(const std::string& text) {
    nlohmann::json doc = nlohmann::json::object();
    nlohmann::json* current = &doc;
    std::istringstream in(text);
    std::string rawline;
    int lineno = 0;
    while (std::getline(in, rawline)) {
        ++lineno;
        const std::string line = detail::trim(detail::strip_comment(rawline));
        if (line.empty()) continue;

        if (line.size() >= 4 && line.substr(0, 2) == "[[" &&
            line.substr(line.size() - 2) == "]]") {
            const std::string name = detail::trim(line.substr(2, line.size() - 4));
            if (name.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty table name");
            if (!doc.contains(name)) doc[name] = nlohmann::json::array();
            if (!doc[name].is_array())
                throw ConfigError("line " + std::to_string(lineno) + ": '" + name +
                                  "' used both as table and array of tables");
            doc[name].push_back(nlohmann::json::object());
            current = &doc[name].back();
            continue;
        }
        if (line.front() == '[' && line.back() == ']') {
            const std::string name = detail::trim(line.substr(1, line.size() - 2));
            if (name.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            if (doc.contains(name) && !doc[name].is_object())
                throw ConfigError("line " + std::to_string(lineno) + ": '" + name +
                                  "' used both as table and array of tables");
            if (!doc.contains(name)) doc[name] = nlohmann::json::object();
            current = &doc[name];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got '" +
                              line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        (*current)[key] = detail::parse_toml_value(line.substr(eq + 1), lineno);
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Validated experiment description.
// ---------------------------------------------------------------------------

struct ObservationSpec {
    std::string kind; // point | derivative | integral | fourier_cos | fourier_sin
    double site = 0.0;
    long long frequency = 1;
    Interval window;
    bool window_set = false;
    long long batch = 1;
    bool from_true = true;
    double value = 0.0;
    double noise = 0.0;
};

/// True function used to synthesize "from_true" observation values.
struct TrueFunction {
    bool present = false;
    std::string name;
    Fn1 value;
    Fn1 deriv;
};

struct ExperimentConfig {
    Interval domain;
    Kernel kernel;
    MeanFunction mean;
    TrueFunction truth;
    std::vector<std::vector<ObservationSpec>> batches;
    Eigen::Index grid_n = 401;
    Eigen::Index oracle_n = 4001;
    std::size_t quad_order = 200;
    std::uint64_t seed = 42;
    double fiber_tolerance = 1e-8;
    double theta = 0.5;
    Eigen::Index spectrum_n = 256;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::string& where,
                                const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline double require_number(const nlohmann::json& obj, const std::string& where,
                             const std::string& key) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
    if (!obj[key].is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return obj[key].get<double>();
}

inline double number_or(const nlohmann::json& obj, const std::string& where,
                        const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return obj[key].get<double>();
}

inline long long integer_or(const nlohmann::json& obj, const std::string& where,
                            const std::string& key, long long fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
    return obj[key].get<long long>();
}

inline std::string require_string(const nlohmann::json& obj, const std::string& where,
                                  const std::string& key) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
    if (!obj[key].is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return obj[key].get<std::string>();
}

inline std::vector<double> number_array(const nlohmann::json& obj, const std::string& where,
                                        const std::string& key) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
    if (!obj[key].is_array()) throw ConfigError(where + "." + key + ": expected an array");
    std::vector<double> out;
    for (const auto& v : obj[key]) {
        if (!v.is_number()) throw ConfigError(where + "." + key + ": expected numeric entries");
        out.push_back(v.get<double>());
    }
    return out;
}

inline TrueFunction build_true_function(const nlohmann::json& tf) {
    reject_unknown_keys(tf, "true_function", {"kind", "grid", "values"});
    TrueFunction out;
    out.present = true;
    out.name = require_string(tf, "true_function", "kind");
    if (out.name == "sine_mix") {
        // bundled analytic example: f(x) = 0.7 sin(2.5x + 0.4) + 0.35 sin(5.3x + 1.7)
        out.value = [](double x) {
            return 0.7 * std::sin(2.5 * x + 0.4) + 0.35 * std::sin(5.3 * x + 1.7);
        };
        out.deriv = [](double x) {
            return 0.7 * 2.5 * std::cos(2.5 * x + 0.4) + 0.35 * 5.3 * std::cos(5.3 * x + 1.7);
        };
    } else if (out.name == "tabulated") {
        const MeanFunction tab =
            MeanFunction::tabulated(number_array(tf, "true_function", "grid"),
                                    number_array(tf, "true_function", "values"));
        out.value = [tab](double x) { return tab(x); };
        out.deriv = [tab](double x) { return tab.deriv(x); };
    } else {
        throw ConfigError("true_function.kind: expected 'sine_mix' or 'tabulated', got '" +
                          out.name + "'");
    }
    return out;
}

} // namespace detail

/// Validate the parsed document (shared by the TOML and JSON encodings) and
/// build the experiment description. Throws ConfigError with a key path on
/// any schema violation.
inline ExperimentConfig config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config root must be a table/object");
    detail::reject_unknown_keys(
        doc, "config", {"domain", "kernel", "mean", "true_function", "output", "observation"});

    ExperimentConfig cfg;

    if (!doc.contains("domain")) throw ConfigError("config: missing [domain] section");
    const auto& dom = doc["domain"];
    detail::reject_unknown_keys(dom, "domain", {"lo", "hi"});
    const double lo = detail::require_number(dom, "domain", "lo");
    const double hi = detail::require_number(dom, "domain", "hi");
    if (!(lo < hi)) throw ConfigError("domain: need lo < hi");
    cfg.domain = Interval{lo, hi};

    if (!doc.contains("kernel")) throw ConfigError("config: missing [kernel] section");
    const auto& ker = doc["kernel"];
    detail::reject_unknown_keys(ker, "kernel", {"family", "lengthscale", "variance"});
    const std::string family = detail::require_string(ker, "kernel", "family");
    const double ls = detail::require_number(ker, "kernel", "lengthscale");
    const double var = detail::number_or(ker, "kernel", "variance", 1.0);
    try {
        if (family == "matern52") cfg.kernel = Kernel::matern52(ls, var);
        else if (family == "squared_exponential") cfg.kernel = Kernel::squared_exponential(ls, var);
        else
            throw ConfigError("kernel.family: expected 'matern52' or 'squared_exponential', got '" +
                              family + "'");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("kernel: ") + e.what());
    }

    if (doc.contains("mean")) {
        const auto& mean = doc["mean"];
        detail::reject_unknown_keys(mean, "mean", {"kind", "value", "grid", "values"});
        const std::string kind = detail::require_string(mean, "mean", "kind");
        if (kind == "zero") {
            cfg.mean = MeanFunction::zero();
        } else if (kind == "constant") {
            cfg.mean = MeanFunction::constant(detail::require_number(mean, "mean", "value"));
        } else if (kind == "tabulated") {
            try {
                cfg.mean = MeanFunction::tabulated(detail::number_array(mean, "mean", "grid"),
                                                   detail::number_array(mean, "mean", "values"));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("mean: ") + e.what());
            }
        } else {
            throw ConfigError("mean.kind: expected 'zero', 'constant' or 'tabulated', got '" +
                              kind + "'");
        }
    }

    if (doc.contains("true_function")) cfg.truth = detail::build_true_function(doc["true_function"]);

    if (doc.contains("output")) {
        const auto& out = doc["output"];
        detail::reject_unknown_keys(out, "output",
                                    {"grid_n", "oracle_n", "quad_order", "seed", "tolerance",
                                     "theta", "spectrum_n"});
        cfg.grid_n = detail::integer_or(out, "output", "grid_n", cfg.grid_n);
        cfg.oracle_n = detail::integer_or(out, "output", "oracle_n", cfg.oracle_n);
        const long long qo =
            detail::integer_or(out, "output", "quad_order", static_cast<long long>(cfg.quad_order));
        const long long seed =
            detail::integer_or(out, "output", "seed", static_cast<long long>(cfg.seed));
        cfg.fiber_tolerance = detail::number_or(out, "output", "tolerance", cfg.fiber_tolerance);
        cfg.theta = detail::number_or(out, "output", "theta", cfg.theta);
        cfg.spectrum_n = detail::integer_or(out, "output", "spectrum_n", cfg.spectrum_n);
        if (cfg.grid_n < 2) throw ConfigError("output.grid_n: must be >= 2");
        if (cfg.oracle_n < 16) throw ConfigError("output.oracle_n: must be >= 16");
        if (qo < 2) throw ConfigError("output.quad_order: must be >= 2");
        if (seed < 0) throw ConfigError("output.seed: must be >= 0");
        if (!(cfg.fiber_tolerance > 0)) throw ConfigError("output.tolerance: must be > 0");
        if (!(cfg.theta > 0 && cfg.theta <= 1)) throw ConfigError("output.theta: must lie in (0,1]");
        if (cfg.spectrum_n < 16) throw ConfigError("output.spectrum_n: must be >= 16");
        cfg.quad_order = static_cast<std::size_t>(qo);
        cfg.seed = static_cast<std::uint64_t>(seed);
    }

    std::map<long long, std::vector<ObservationSpec>> grouped;
    if (doc.contains("observation")) {
        if (!doc["observation"].is_array())
            throw ConfigError("observation: expected an array of tables ([[observation]])");
        int idx = 0;
        for (const auto& entry : doc["observation"]) {
            const std::string where = "observation[" + std::to_string(idx++) + "]";
            detail::reject_unknown_keys(
                entry, where, {"kind", "site", "frequency", "window", "batch", "value", "noise"});
            ObservationSpec spec;
            spec.kind = detail::require_string(entry, where, "kind");
            spec.batch = detail::integer_or(entry, where, "batch", 1);
            if (spec.batch < 1) throw ConfigError(where + ".batch: must be >= 1");
            spec.noise = detail::number_or(entry, where, "noise", 0.0);
            if (spec.noise < 0) throw ConfigError(where + ".noise: must be >= 0");

            if (spec.kind == "point" || spec.kind == "derivative") {
                spec.site = detail::require_number(entry, where, "site");
                if (!cfg.domain.contains(spec.site))
                    throw ConfigError(where + ".site: outside the experiment domain");
            } else if (spec.kind == "integral") {
                if (entry.contains("window")) {
                    const auto w = detail::number_array(entry, where, "window");
                    if (w.size() != 2 || !(w[0] < w[1]))
                        throw ConfigError(where + ".window: expected [lo, hi] with lo < hi");
                    spec.window = Interval{w[0], w[1]};
                    spec.window_set = true;
                    if (!cfg.domain.contains(spec.window))
                        throw ConfigError(where + ".window: outside the experiment domain");
                }
            } else if (spec.kind == "fourier_cos" || spec.kind == "fourier_sin") {
                spec.frequency = detail::integer_or(entry, where, "frequency", 1);
                if (spec.frequency < 1) throw ConfigError(where + ".frequency: must be >= 1");
            } else {
                throw ConfigError(where + ".kind: expected point, derivative, integral, "
                                          "fourier_cos or fourier_sin, got '" +
                                  spec.kind + "'");
            }

            if (entry.contains("value")) {
                if (entry["value"].is_string()) {
                    if (entry["value"].get<std::string>() != "from_true")
                        throw ConfigError(where + ".value: expected a number or \"from_true\"");
                    spec.from_true = true;
                } else if (entry["value"].is_number()) {
                    spec.from_true = false;
                    spec.value = entry["value"].get<double>();
                } else {
                    throw ConfigError(where + ".value: expected a number or \"from_true\"");
                }
            }
            if (spec.from_true && !cfg.truth.present)
                throw ConfigError(where + ": value is \"from_true\" but no [true_function] given");
            grouped[spec.batch].push_back(spec);
        }
    }
    for (auto& [batch_id, specs] : grouped) {
        (void)batch_id;
        cfg.batches.push_back(std::move(specs));
    }
    return cfg;
}

/// Build the LinearFunctional an observation spec describes.
inline LinearFunctional build_functional(const ObservationSpec& spec, const ExperimentConfig& cfg) {
    if (spec.kind == "point") return LinearFunctional::point_eval(spec.site);
    if (spec.kind == "derivative") return LinearFunctional::deriv_eval(spec.site);
    if (spec.kind == "integral")
        return LinearFunctional::integral([](double) { return 1.0; },
                                          spec.window_set ? spec.window : cfg.domain,
                                          cfg.quad_order);
    return fourier_functional(static_cast<std::size_t>(spec.frequency), spec.kind == "fourier_cos",
                              cfg.domain, cfg.quad_order);
}

/// Observation value: explicit, or the functional applied to the true function.
inline double observed_value(const ObservationSpec& spec, const LinearFunctional& f,
                             const ExperimentConfig& cfg) {
    if (!spec.from_true) return spec.value;
    return apply(f, cfg.truth.value, cfg.truth.deriv);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    nlohmann::json doc;
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("JSON parse error: ") + e.what());
        }
    } else {
        doc = parse_toml_subset(text);
    }
    return config_from_json(doc);
}

} // namespace opgp
