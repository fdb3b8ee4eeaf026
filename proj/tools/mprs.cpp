// Batch front door: config in, JSON report + CSV tables out, nonzero exit on
// tolerance failures. Subcommands: solve | expand | strategies | verify | mc |
// counterexample.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "mprs/config.hpp"
#include "mprs/mc.hpp"
#include "mprs/report.hpp"

namespace fs = std::filesystem;
using namespace mprs;

namespace {

struct Runner {
    Config cfg;
    std::string out_dir;
    int threads = 1;
    double tol_scale = 1.0;
    std::vector<Check> checks;
    nlohmann::json report;

    double tle(const std::string& name) const { return cfg.tol(name) * tol_scale; }

    void add(Check c) { checks.push_back(std::move(c)); }

    bool finish(const std::string& artifact) {
        report["checks"] = to_json(checks);
        fs::create_directories(out_dir);
        write_text(out_dir + "/" + artifact, report.dump(2) + "\n");
        bool ok = true;
        for (const auto& c : checks) {
            std::printf("[%s] %-34s %.6e %s %.6e\n", c.pass ? "PASS" : "FAIL",
                        c.name.c_str(), c.value, c.cmp.c_str(), c.threshold);
            ok = ok && c.pass;
        }
        if (!ok) {
            for (const auto& c : checks)
                if (!c.pass) std::printf("ToleranceFailure: %s\n", c.name.c_str());
        }
        return ok;
    }
};

struct Solved {
    TreeMarket market;
    OptimalPair pair;
};

Solved solve_stage(Runner& r) {
    Solved s{r.cfg.build_market(), {}};
    s.market.validate();
    s.pair = solve_unperturbed(s.market, *r.cfg.utility, r.cfg.x);
    risk_tolerance(s.pair, s.market, *r.cfg.utility);
    r.add(check_le("foc_residual", s.pair.foc_residual, r.tle("foc_residual")));
    r.add(check_le("conjugacy_u_v_xy",
                   std::abs(s.pair.u0 - s.pair.v0 - s.pair.x * s.pair.y),
                   r.tle("duality_gap")));
    const DualSolution dual = dual_solve(s.market, *r.cfg.utility, s.pair.y, 0.0);
    r.add(check_le("duality_gap", std::abs(s.pair.u0 - dual.value - s.pair.x * s.pair.y),
                   r.tle("duality_gap")));
    const DeflatorCheck dc = verify_deflator(s.pair, s.market);
    r.add(check_le("deflator_orthogonality", dc.max_orthogonality, 1e-11));
    r.report["solve"] = to_json(s.pair);
    return s;
}

struct Expanded {
    AttainableSpace space;
    SensitivityReport rep;
    IdentityReport ids;
};

Expanded expand_stage(Runner& r, const Solved& s) {
    Expanded e;
    e.space = build_attainable_space(s.pair, s.market);
    e.rep = analyze(s.market, s.pair, *r.cfg.utility, e.space);
    e.ids = verify_identities(s.market, s.pair, *r.cfg.utility, e.space, e.rep);
    r.add(check_le("axx_byy_product", std::abs(e.rep.axx * e.rep.byy - 1.0),
                   r.tle("axx_byy_product")));
    r.add(check_le("matrix_identity", e.ids.matrix_identity, r.tle("matrix_identity")));
    r.add(check_le("gap_identity", e.ids.gap_identity, r.tle("gap_identity")));
    r.add(check_le("pointwise_primal", e.ids.pointwise_primal, r.tle("pointwise_identity")));
    r.add(check_le("pointwise_dual", e.ids.pointwise_dual, r.tle("pointwise_identity")));
    r.add(check_le("product_martingales", e.ids.max_martingale, r.tle("martingale")));
    r.add(check_le("space_orthogonality", e.ids.orthogonality, 1e-12 * r.tol_scale));
    r.report["expand"] = to_json(e.rep);
    r.report["expand"]["residuals"] = to_json(e.ids);
    nlohmann::json probe = nlohmann::json::array();
    for (auto [c, v] : integrability_probe(s.market, s.pair, r.cfg.c_grid))
        probe.push_back({{"c", c}, {"zeta_moment", v}});
    r.report["expand"]["integrability"] = probe;

    if (s.pair.rt_exists) {
        const KWDecomposition kw = kw_decompose(s.pair, s.market, *r.cfg.utility, e.space,
                                                e.rep.F, e.rep.G);
        const KWHessian kh = hessian_from_kw(kw, s.pair, e.rep.axx);
        auto [m1k, n1k] = recover_m1_n1(kw, s.pair, s.market);
        const double m1_dev = (m1k - e.rep.m1).cwiseAbs().maxCoeff();
        const double n1_dev = (n1k - e.rep.n1).cwiseAbs().maxCoeff();
        r.add(check_le("kw_reconstruction", kw.recon_residual, r.tle("kw_reconstruction")));
        r.add(check_le("kw_orthogonality", kw.ortho_residual, r.tle("kw_orthogonality")));
        r.add(check_le("kw_m1_n1_match", std::max(m1_dev, n1_dev), 1e-9 * r.tol_scale));
        const double coef_dev =
            std::max(std::max(std::abs(kh.add - e.rep.add), std::abs(kh.bdd - e.rep.bdd)),
                     std::max(std::abs(kh.axd - e.rep.axd), std::abs(kh.byd - e.rep.byd)));
        r.add(check_le("kw_vs_direct", coef_dev, r.tle("kw_vs_direct")));
        r.add(check_le("kw_r0", std::abs(s.pair.r0 - s.pair.x / e.rep.axx), r.tle("kw_r0")));
        r.report["kw"] = to_json(kw);
        r.report["kw"]["hessian_coefficients"] = {
            {"add", kh.add}, {"bdd", kh.bdd}, {"axd", kh.axd}, {"byd", kh.byd}};
    }
    return e;
}

void strategies_stage(Runner& r, const Solved& s, const Expanded& e, bool fit_deficit) {
    auto [g0, g1] = derive_gammas(s.pair, e.rep, e.space, s.market);
    const double rec0 = gamma_reconstruction_residual(
        s.market, s.pair, g0, e.rep.m0 / s.pair.x);
    const double rec1 = gamma_reconstruction_residual(
        s.market, s.pair, g1, e.rep.m1 / s.pair.x);
    r.add(check_le("gamma_reconstruction", std::max(rec0, rec1), 1e-9 * r.tol_scale));

    const CorrectedStrategy cs = make_corrected(s.pair, e.rep, e.space, s.market,
                                                r.cfg.strat_dx, r.cfg.strat_delta);
    const PathFunctional w = corrected_wealth(cs, s.market, s.pair);
    double eu = 0.0;
    for (int l = 0; l < s.market.n_leaves(); ++l)
        eu += s.market.path_prob[l] * r.cfg.utility->u(w[l]);
    const double u_true =
        brute_solve(s.market, *r.cfg.utility, s.pair.x + r.cfg.strat_dx, r.cfg.strat_delta)
            .u0;
    const double deficit = u_true - eu;
    r.add(check_ge("strategy_deficit_floor", deficit, -r.tle("deficit_floor")));
    write_strategy_csv(r.out_dir + "/strategy.csv", s.market, cs);
    r.report["strategies"] = {{"dx", cs.dx},
                              {"delta", cs.delta},
                              {"eps", cs.eps},
                              {"expected_utility", eu},
                              {"oracle_u", u_true},
                              {"deficit", deficit},
                              {"truncation_inactive", truncation_inactive(cs)}};

    if (fit_deficit) {
        std::vector<std::pair<double, double>> pts;
        nlohmann::json table = nlohmann::json::array();
        for (double t : r.cfg.t_grid) {
            const double dx = t * r.cfg.probe_r0, dd = t * r.cfg.probe_r0;
            const CorrectedStrategy cst =
                make_corrected(s.pair, e.rep, e.space, s.market, dx, dd);
            const PathFunctional wt = corrected_wealth(cst, s.market, s.pair);
            double eut = 0.0;
            for (int l = 0; l < s.market.n_leaves(); ++l)
                eut += s.market.path_prob[l] * r.cfg.utility->u(wt[l]);
            const double def =
                brute_solve(s.market, *r.cfg.utility, s.pair.x + dx, dd).u0 - eut;
            r.add(check_ge("deficit_floor_t" + std::to_string(t), def,
                           -r.tle("deficit_floor")));
            pts.emplace_back(t, std::max(def, 0.0));
            table.push_back({{"t", t}, {"deficit", def}});
        }
        std::sort(pts.begin(), pts.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });
        const double slope = fit_order(pts);
        r.add(check_ge("deficit_slope", slope, r.cfg.tol("deficit_slope")));
        r.report["strategies"]["deficit_table"] = table;
        r.report["strategies"]["deficit_slope"] = slope;
    }
}

void verify_stage(Runner& r, const Solved& s, const Expanded& e) {
    // First-order derivative against the oracle central difference.
    const double fd = fd_u_delta(s.market, *r.cfg.utility, s.pair.x, r.cfg.fd_step);
    const double rel = std::abs(fd - e.rep.u_delta) /
                       std::max(1e-30, std::abs(e.rep.u_delta));
    r.add(check_le("first_order_vs_fd", rel, r.tle("first_order_rel")));

    // Second-order expansion along the configured rays.
    const auto probes =
        probe_expansion(s.market, *r.cfg.utility, e.rep, r.cfg.rays, r.cfg.probe_r0,
                        r.cfg.t_grid);
    write_expansion_csv(r.out_dir + "/expansion_residuals.csv", probes);
    nlohmann::json jfits = nlohmann::json::array();
    for (const auto& p : probes) {
        char name[64];
        std::snprintf(name, sizeof name, "expansion_slope_ray_%g_%g", p.ray[0], p.ray[1]);
        r.add(check_ge(name, p.slope, r.cfg.tol("expansion_slope")));
        jfits.push_back({{"ray", {p.ray[0], p.ray[1]}}, {"slope", p.slope}});
    }
    r.report["order_fits"] = jfits;

    // Optimizer-derivative decay along the (1,1) ray.
    std::vector<double> devs;
    for (double t : r.cfg.t_grid) {
        const double dx = t * r.cfg.probe_r0, dd = t * r.cfg.probe_r0;
        const OptimalPair op = brute_solve(s.market, *r.cfg.utility, s.pair.x + dx, dd);
        const OptimizerPrediction pred =
            predict_optimizer_primal(s.pair, e.rep, dx, dd, op.ldelta);
        const double dev =
            (op.xhat_T - pred.multiplicative).cwiseAbs().maxCoeff() / (dx + std::abs(dd));
        devs.push_back(dev);
    }
    double worst_ratio = 0.0;
    for (std::size_t i = 1; i < devs.size(); ++i) {
        if (devs[i] <= 1e-11) continue;  // prediction exact to rounding
        worst_ratio = std::max(worst_ratio, devs[i] / devs[i - 1]);
    }
    r.add(check_le("optimizer_decay_ratio", worst_ratio,
                   1.0 / r.cfg.tol("optimizer_decay")));
    r.report["optimizer_derivative_devs"] = devs;

    // Growth inequalities on a 50x50 log grid.
    std::vector<std::pair<double, double>> grid;
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 50; ++j)
            grid.emplace_back(std::pow(10.0, -3.0 + 6.0 * i / 49.0),
                              std::pow(10.0, -3.0 + 6.0 * j / 49.0));
    const GrowthReport gr = check_growth_inequalities(*r.cfg.utility, grid);
    r.add(check_le("growth_violations", static_cast<double>(gr.violations.size()),
                   r.cfg.tol("growth_violations")));
}

void mc_stage(Runner& r) {
    using namespace mprs::mc;
    const MertonRecord model =
        merton_baseline(r.cfg.mc_p, r.cfg.mc_lambda, r.cfg.mc_sigma, r.cfg.mc_x, r.cfg.mc_T);
    const PathEnsemble ens(r.cfg.mc_paths, r.cfg.mc_steps, r.cfg.mc_T, r.cfg.mc_seed,
                           r.cfg.mc_stream, r.cfg.mc_antithetic);
    const IncrementSanity sane = increment_sanity(ens);
    r.add(check_le("mc_increment_sanity",
                   std::max(sane.worst_mean_z, sane.worst_var_z), 5.0));
    const double nu = r.cfg.mc_nu;
    const Estimate est = estimate_first_order(
        ens, model, [nu](double, double) { return nu; }, r.threads);
    const Estimate wchk = weight_sanity(ens, model, r.threads);
    r.add(check_le("mc_weight_mean",
                   std::abs(wchk.value - 1.0) / std::max(wchk.stderr_, 1e-300), 5.0));

    const double dtt = r.cfg.mc_T / r.cfg.mc_tree_steps;
    const TreeMarket tree = TreeMarket::binomial(
        r.cfg.mc_tree_steps, dtt, r.cfg.mc_sigma,
        [&](int, double) { return r.cfg.mc_lambda; }, [&](int, double) { return nu; });
    const auto U = power_utility(r.cfg.mc_p);
    const OptimalPair pair = solve_unperturbed(tree, *U, r.cfg.mc_x);
    auto [F, G] = tree.compute_F_G();
    const double tree_ud = first_order(pair, F);
    const double sig = std::abs(est.value - tree_ud) / std::max(est.stderr_, 1e-300);
    r.add(check_le("mc_vs_tree_sigmas", sig, r.cfg.tol("mc_tree_sigmas")));

    write_mc_csv(r.out_dir + "/mc.csv", est.value, est.stderr_, est.n, r.cfg.mc_seed);
    r.report["mc"] = {{"u_delta_estimate", est.value},
                      {"stderr", est.stderr_},
                      {"n_paths", est.n},
                      {"tree_u_delta", tree_ud},
                      {"closed_form_u_delta", model.u_delta_const_nu(nu)},
                      {"weight_mean", wchk.value},
                      {"pi_star", model.pi_star}};
}

void counterexample_stage(Runner& r) {
    using namespace mprs::mc;
    const PathEnsemble ens(r.cfg.ce_paths, r.cfg.ce_steps, 1.0, r.cfg.ce_seed, 1, false);
    const auto table = counterexample_probe(r.cfg.ce_c, r.cfg.ce_truncations, ens,
                                            r.cfg.ce_p, r.threads);
    double worst_factor = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < table.size(); ++i) {
        const double decades = std::log10(table[i].first / table[i - 1].first);
        const double factor =
            std::pow(table[i].second / table[i - 1].second, 1.0 / decades);
        worst_factor = std::min(worst_factor, factor);
    }
    r.add(check_ge("ce_growth_per_decade", worst_factor, r.cfg.tol("ce_growth_factor")));

    // nu = 0 comparator: zeta = 1 identically, so every truncated moment is
    // the importance-weight mean and must pin to 1.
    const PathEnsemble ens0(r.cfg.ce_paths, r.cfg.ce_steps, 1.0, r.cfg.ce_seed, 2, false);
    const Estimate w = weight_sanity(ens0, merton_baseline(r.cfg.ce_p, 1, 1, 1, 1),
                                     r.threads);
    r.add(check_le("ce_comparator_band", std::abs(w.value - 1.0),
                   r.cfg.tol("ce_comparator_band")));
    r.report["counterexample_comparator"] = {{"moment", w.value}, {"stderr", w.stderr_}};

    write_counterexample_csv(r.out_dir + "/counterexample.csv", r.cfg.ce_c, table);
    nlohmann::json jt = nlohmann::json::array();
    for (auto [K, v] : table) jt.push_back({{"K", K}, {"moment", v}});
    r.report["counterexample"] = {{"c", r.cfg.ce_c}, {"table", jt}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sensitivity analysis of utility maximization under market price of risk "
                 "perturbations"};
    std::string config_path, out_dir = "out", subcommand;
    int threads = 1;
    double tol_scale = 1.0;
    std::int64_t seed_override = -1;

    app.require_subcommand(1);
    std::vector<CLI::App*> subs;
    for (const char* name : {"solve", "expand", "strategies", "verify", "mc",
                             "counterexample"})
        subs.push_back(app.add_subcommand(name));
    for (auto* s : subs) {
        s->add_option("--config", config_path, "config file (JSON)")->required();
        s->add_option("--out-dir", out_dir, "output directory");
        s->add_option("--seed", seed_override, "override MC seeds");
        s->add_option("--threads", threads, "worker threads for MC");
        s->add_option("--tolerance-scale", tol_scale, "scale residual tolerances");
    }
    CLI11_PARSE(app, argc, argv);
    subcommand = app.get_subcommands()[0]->get_name();

    try {
        Runner r;
        r.cfg = Config::from_file(config_path);
        r.out_dir = out_dir;
        fs::create_directories(r.out_dir);
        r.threads = threads;
        r.tol_scale = tol_scale;
        if (seed_override >= 0) {
            r.cfg.mc_seed = static_cast<std::uint64_t>(seed_override);
            r.cfg.ce_seed = static_cast<std::uint64_t>(seed_override) + 1;
        }
        r.report = report_frame(r.cfg.raw);

        if (subcommand == "solve") {
            solve_stage(r);
        } else if (subcommand == "expand") {
            Solved s = solve_stage(r);
            expand_stage(r, s);
        } else if (subcommand == "strategies") {
            Solved s = solve_stage(r);
            Expanded e = expand_stage(r, s);
            strategies_stage(r, s, e, false);
        } else if (subcommand == "verify") {
            Solved s = solve_stage(r);
            Expanded e = expand_stage(r, s);
            strategies_stage(r, s, e, true);
            verify_stage(r, s, e);
        } else if (subcommand == "mc") {
            mc_stage(r);
        } else if (subcommand == "counterexample") {
            counterexample_stage(r);
        }
        return r.finish("report.json") ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "ConfigError: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
