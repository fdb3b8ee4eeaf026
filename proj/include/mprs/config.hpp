#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mprs/tree.hpp"
#include "mprs/utility.hpp"

namespace mprs {

/// Validated run configuration (sections market/utility/perturbation/probe/
/// strategies/mc/counterexample/tolerances). parse() reports schema
/// violations as ConfigError with the offending key path.
struct Config {
    nlohmann::json raw;

    // market
    std::string market_kind;  // binomial | trinomial | explicit
    int steps = 4;
    double dt = 0.25;
    double sigma = 0.2;
    NodeFn lambda_fn, nu_fn;
    nlohmann::json explicit_tree;

    // utility
    std::shared_ptr<const Utility> utility;

    // perturbation / probes
    double x = 1.0;
    double probe_r0 = 0.05;
    std::vector<std::array<double, 2>> rays = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
    std::vector<double> t_grid = {0.25, 0.125, 0.0625, 0.03125, 0.015625};
    double fd_step = 1e-4;
    std::vector<double> c_grid = {0.5, 1.0, 2.0};

    // strategies
    double strat_dx = 0.02, strat_delta = 0.02;

    // mc
    double mc_lambda = 1.0, mc_sigma = 0.2, mc_T = 1.0, mc_x = 1.0, mc_p = 0.5;
    double mc_nu = 1.0;
    std::int64_t mc_paths = 100000;
    int mc_steps = 256;
    std::uint64_t mc_seed = 20240814;
    std::uint64_t mc_stream = 0;
    bool mc_antithetic = false;
    int mc_tree_steps = 12;

    // counterexample
    double ce_c = 1.0;
    std::vector<double> ce_truncations = {1e2, 1e4, 1e6};
    std::int64_t ce_paths = 1000000;
    int ce_steps = 256;
    double ce_p = 0.5;
    std::uint64_t ce_seed = 911;

    std::map<std::string, double> tolerances;

    TreeMarket build_market() const;

    static Config parse(const nlohmann::json& j);
    static Config from_file(const std::string& path);

    double tol(const std::string& name) const;
};

/// Defaults for every named tolerance, per the module contracts.
const std::map<std::string, double>& default_tolerances();

/// FNV-1a hash of the canonical config dump, reported in every artifact.
std::string config_hash(const nlohmann::json& j);

}  // namespace mprs
