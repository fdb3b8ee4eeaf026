#include "mprs/config.hpp"

#include <fstream>

#include "mprs/errors.hpp"

namespace mprs {

namespace {

double require_number(const nlohmann::json& j, const std::string& path,
                      const std::string& key) {
    if (!j.contains(key) || !j[key].is_number())
        throw ConfigError(path + "." + key, "expected a number");
    return j[key].get<double>();
}

double number_or(const nlohmann::json& j, const std::string& path, const std::string& key,
                 double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ConfigError(path + "." + key, "expected a number");
    return j[key].get<double>();
}

NodeFn parse_coef(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object {kind, ...}");
    const std::string kind = j.value("kind", "const");
    if (kind == "const") {
        const double v = require_number(j, path, "value");
        return [v](int, double) { return v; };
    }
    if (kind == "affine") {
        const double a = number_or(j, path, "intercept", 0.0);
        const double b = number_or(j, path, "slope", 0.0);
        return [a, b](int, double state) { return a + b * state; };
    }
    throw ConfigError(path + ".kind", "unknown coefficient kind '" + kind + "'");
}

std::shared_ptr<const Utility> parse_utility(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("utility", "expected an object");
    const std::string kind = j.value("kind", "");
    if (kind == "power") {
        const double p = require_number(j, "utility", "p");
        if (p >= 1.0 || p == 0.0)
            throw ConfigError("utility.p", "power utility requires p < 1 and p != 0");
        return power_utility(p);
    }
    if (kind == "log") return log_utility();
    if (kind == "mixed_power") {
        if (!j.contains("terms") || !j["terms"].is_array() || j["terms"].empty())
            throw ConfigError("utility.terms", "expected a non-empty array");
        std::vector<std::pair<double, double>> terms;
        int i = 0;
        for (const auto& t : j["terms"]) {
            const std::string path = "utility.terms[" + std::to_string(i++) + "]";
            const double w = number_or(t, path, "weight", 1.0);
            const double p = require_number(t, path, "p");
            if (w <= 0.0) throw ConfigError(path + ".weight", "must be positive");
            if (p >= 1.0 || p == 0.0)
                throw ConfigError(path + ".p", "requires p < 1 and p != 0");
            terms.emplace_back(w, p);
        }
        return mixed_power_utility(terms);
    }
    throw ConfigError("utility.kind", "expected power | log | mixed_power");
}

}  // namespace

const std::map<std::string, double>& default_tolerances() {
    static const std::map<std::string, double> tols = {
        {"duality_gap", 1e-9},        {"axx_byy_product", 1e-10},
        {"foc_residual", 1e-12},      {"matrix_identity", 1e-8},
        {"gap_identity", 1e-8},       {"pointwise_identity", 1e-9},
        {"martingale", 1e-10},        {"kw_reconstruction", 1e-10},
        {"kw_orthogonality", 1e-10},  {"kw_vs_direct", 1e-8},
        {"kw_r0", 1e-9},              {"first_order_rel", 1e-6},
        {"expansion_slope", 2.5},     {"optimizer_decay", 1.5},
        {"deficit_floor", 1e-12},     {"deficit_slope", 2.5},
        {"growth_violations", 0.0},   {"ce_growth_factor", 2.0},
        {"ce_comparator_band", 0.01}, {"mc_tree_sigmas", 3.0},
    };
    return tols;
}

double Config::tol(const std::string& name) const {
    auto it = tolerances.find(name);
    if (it != tolerances.end()) return it->second;
    auto dit = default_tolerances().find(name);
    if (dit == default_tolerances().end())
        throw std::logic_error("unknown tolerance '" + name + "'");
    return dit->second;
}

Config Config::parse(const nlohmann::json& j) {
    Config c;
    c.raw = j;
    if (!j.is_object()) throw ConfigError("", "top level must be an object");

    const auto& jm = j.contains("market") ? j["market"] : nlohmann::json::object();
    c.market_kind = jm.value("kind", "binomial");
    if (c.market_kind != "binomial" && c.market_kind != "trinomial" &&
        c.market_kind != "explicit")
        throw ConfigError("market.kind", "expected binomial | trinomial | explicit");
    if (c.market_kind == "explicit") {
        if (!jm.contains("tree"))
            throw ConfigError("market.tree", "explicit market requires a tree layout");
        c.explicit_tree = jm["tree"];
    } else {
        c.steps = static_cast<int>(number_or(jm, "market", "steps", 4));
        c.dt = number_or(jm, "market", "dt", 0.25);
        c.sigma = number_or(jm, "market", "sigma", 0.2);
        if (c.steps < 1) throw ConfigError("market.steps", "must be >= 1");
        if (c.dt <= 0.0) throw ConfigError("market.dt", "must be positive");
        if (c.sigma <= 0.0) throw ConfigError("market.sigma", "must be positive");
        c.lambda_fn = jm.contains("lambda") ? parse_coef(jm["lambda"], "market.lambda")
                                            : NodeFn([](int, double) { return 0.0; });
        c.nu_fn = jm.contains("nu") ? parse_coef(jm["nu"], "market.nu")
                                    : NodeFn([](int, double) { return 0.0; });
    }

    c.utility = j.contains("utility") ? parse_utility(j["utility"]) : power_utility(0.5);

    const auto& jp = j.contains("perturbation") ? j["perturbation"] : nlohmann::json::object();
    c.x = number_or(jp, "perturbation", "x", 1.0);
    if (c.x <= 0.0) throw ConfigError("perturbation.x", "must be positive");
    c.probe_r0 = number_or(jp, "perturbation", "r0", 0.05);
    c.fd_step = number_or(jp, "perturbation", "fd_step", 1e-4);
    if (jp.contains("rays")) {
        if (!jp["rays"].is_array() || jp["rays"].empty())
            throw ConfigError("perturbation.rays", "expected a non-empty array of [dx,dd]");
        c.rays.clear();
        for (const auto& r : jp["rays"]) {
            if (!r.is_array() || r.size() != 2)
                throw ConfigError("perturbation.rays", "each ray must be [dx, ddelta]");
            c.rays.push_back({r[0].get<double>(), r[1].get<double>()});
        }
    }
    if (jp.contains("t_grid")) {
        c.t_grid.clear();
        for (const auto& t : jp["t_grid"]) c.t_grid.push_back(t.get<double>());
        if (c.t_grid.size() < 3)
            throw ConfigError("perturbation.t_grid", "need >= 3 scales");
    }

    if (j.contains("probe") && j["probe"].contains("c_grid")) {
        c.c_grid.clear();
        for (const auto& t : j["probe"]["c_grid"]) {
            if (t.get<double>() < 0.0) throw ConfigError("probe.c_grid", "c must be >= 0");
            c.c_grid.push_back(t.get<double>());
        }
    }

    const auto& js = j.contains("strategies") ? j["strategies"] : nlohmann::json::object();
    c.strat_dx = number_or(js, "strategies", "dx", 0.02);
    c.strat_delta = number_or(js, "strategies", "delta", 0.02);

    const auto& jmc = j.contains("mc") ? j["mc"] : nlohmann::json::object();
    const auto& jmodel = jmc.contains("model") ? jmc["model"] : nlohmann::json::object();
    c.mc_lambda = number_or(jmodel, "mc.model", "lambda", 1.0);
    c.mc_sigma = number_or(jmodel, "mc.model", "sigma", 0.2);
    c.mc_T = number_or(jmodel, "mc.model", "T", 1.0);
    c.mc_x = number_or(jmodel, "mc.model", "x", 1.0);
    c.mc_p = number_or(jmodel, "mc.model", "p", 0.5);
    if (c.mc_sigma <= 0.0) throw ConfigError("mc.model.sigma", "must be positive");
    if (c.mc_p >= 1.0 || c.mc_p == 0.0)
        throw ConfigError("mc.model.p", "power utility requires p < 1 and p != 0");
    c.mc_nu = number_or(jmc, "mc", "nu", 1.0);
    c.mc_paths = static_cast<std::int64_t>(number_or(jmc, "mc", "n_paths", 100000));
    c.mc_steps = static_cast<int>(number_or(jmc, "mc", "n_steps", 256));
    c.mc_seed = static_cast<std::uint64_t>(number_or(jmc, "mc", "seed", 20240814));
    c.mc_stream = static_cast<std::uint64_t>(number_or(jmc, "mc", "stream_id", 0));
    c.mc_antithetic = jmc.value("antithetic", false);
    c.mc_tree_steps = static_cast<int>(number_or(jmc, "mc", "tree_steps", 12));
    if (c.mc_paths < 2) throw ConfigError("mc.n_paths", "need >= 2 paths");
    if (c.mc_steps < 1) throw ConfigError("mc.n_steps", "need >= 1 step");

    const auto& jce = j.contains("counterexample") ? j["counterexample"]
                                                   : nlohmann::json::object();
    c.ce_c = number_or(jce, "counterexample", "c", 1.0);
    if (jce.contains("truncations")) {
        c.ce_truncations.clear();
        for (const auto& t : jce["truncations"]) c.ce_truncations.push_back(t.get<double>());
    }
    c.ce_paths = static_cast<std::int64_t>(number_or(jce, "counterexample", "n_paths", 1e6));
    c.ce_steps = static_cast<int>(number_or(jce, "counterexample", "n_steps", 256));
    c.ce_p = number_or(jce, "counterexample", "p", 0.5);
    c.ce_seed = static_cast<std::uint64_t>(number_or(jce, "counterexample", "seed", 911));
    if (!(c.ce_p > 0.0 && c.ce_p < 1.0))
        throw ConfigError("counterexample.p", "requires p in (0,1)");

    if (j.contains("tolerances")) {
        if (!j["tolerances"].is_object())
            throw ConfigError("tolerances", "expected an object of name -> value");
        for (const auto& [k, v] : j["tolerances"].items()) {
            if (!default_tolerances().count(k))
                throw ConfigError("tolerances." + k, "unknown tolerance name");
            if (!v.is_number()) throw ConfigError("tolerances." + k, "expected a number");
            c.tolerances[k] = v.get<double>();
        }
    }
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("", std::string("JSON parse failure: ") + e.what());
    }
    return parse(j);
}

TreeMarket Config::build_market() const {
    if (market_kind == "explicit") return TreeMarket::from_json(explicit_tree.dump());
    if (market_kind == "trinomial")
        return TreeMarket::trinomial(steps, dt, sigma, lambda_fn, nu_fn);
    return TreeMarket::binomial(steps, dt, sigma, lambda_fn, nu_fn);
}

std::string config_hash(const nlohmann::json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace mprs
