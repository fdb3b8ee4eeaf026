// Acceptance suite: one pass/fail line per criterion, pinned tolerances.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "mprs/kw.hpp"
#include "mprs/mc.hpp"
#include "mprs/oracle.hpp"
#include "mprs/strategies.hpp"

using namespace mprs;
using Clock = std::chrono::steady_clock;

namespace {

const NodeFn kOne = [](int, double) { return 1.0; };
NodeFn constant(double v) { return [v](int, double) { return v; }; }

struct Criterion {
    int id;
    std::string label;
    bool pass = true;
    std::string detail;
    double seconds = 0.0;
};

std::vector<Criterion> results;

struct Timer {
    Clock::time_point t0 = Clock::now();
    double elapsed() const {
        return std::chrono::duration<double>(Clock::now() - t0).count();
    }
};

void record(int id, const std::string& label, bool pass, const std::string& detail,
            double seconds) {
    results.push_back({id, label, pass, detail, seconds});
    std::printf("[%s] criterion %2d: %-26s %s (%.2fs)\n", pass ? "PASS" : "FAIL", id,
                label.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

struct Instance {
    TreeMarket m;
    std::shared_ptr<const Utility> u;
    OptimalPair pair;
    AttainableSpace sp;
    SensitivityReport rep;
};

Instance solve_instance(TreeMarket m, std::shared_ptr<const Utility> u, double x) {
    Instance s{std::move(m), std::move(u), {}, {}, {}};
    s.pair = solve_unperturbed(s.m, *s.u, x);
    risk_tolerance(s.pair, s.m, *s.u);
    s.sp = build_attainable_space(s.pair, s.m);
    s.rep = analyze(s.m, s.pair, *s.u, s.sp);
    return s;
}

TreeMarket standard_tree() {
    return TreeMarket::binomial(4, 0.25, 0.2, constant(2.0), kOne);
}

double expected_utility(const TreeMarket& m, const Utility& u, const PathFunctional& w) {
    double v = 0.0;
    for (int l = 0; l < m.n_leaves(); ++l) v += m.path_prob[l] * u.u(w[l]);
    return v;
}

const std::vector<double> kTGrid = {0.25, 0.125, 0.0625, 0.03125, 0.015625};
constexpr double kR0 = 0.05;

}  // namespace

int main() {
    // ---- 1. duality suite --------------------------------------------------
    {
        Timer t;
        Instance s = solve_instance(standard_tree(), power_utility(0.5), 1.0);
        const double gap = std::abs(s.pair.u0 - s.pair.v0 - s.pair.x * s.pair.y);
        const double prod = std::abs(s.rep.axx * s.rep.byy - 1.0);
        const double sec = t.elapsed();
        record(1, "duality suite", gap <= 1e-9 && prod <= 1e-10 && sec < 1.0,
               fmt("|u-v-xy|=%.2e |axx*byy-1|=%.2e", gap, prod), sec);
    }

    // ---- 2. closed-form coefficients (power utility) -----------------------
    {
        Timer t;
        Instance s = solve_instance(standard_tree(), power_utility(0.5), 1.0);
        const double axx_err = std::abs(s.rep.axx - 0.5);
        const double m0_max = s.rep.m0.cwiseAbs().maxCoeff();
        const double eF = s.pair.r_weights.dot(s.rep.F);
        const double axd_err = std::abs(s.rep.axd - (-0.5 * eF));
        const double r0_err = std::abs(s.pair.r0 - 1.0 / 0.5);
        const bool ok =
            axx_err <= 1e-12 && m0_max <= 1e-12 && axd_err <= 1e-10 && r0_err <= 1e-10;
        record(2, "closed-form coefficients", ok,
               fmt("|axx-(1-p)|=%.1e |M0|=%.1e |axd+pE[F]|=%.1e |R0-x/(1-p)|=%.1e",
                   axx_err, m0_max, axd_err, r0_err),
               t.elapsed());
    }

    // ---- 3. identity suite on three instances ------------------------------
    {
        Timer t;
        bool ok = true;
        std::string detail;
        const auto mixed = mixed_power_utility({{1.0, 0.3}, {1.0, 0.7}});
        std::vector<std::pair<std::string, Instance>> instances;
        instances.emplace_back("power/binomial",
                               solve_instance(standard_tree(), power_utility(0.5), 1.0));
        instances.emplace_back("mixed/binomial",
                               solve_instance(standard_tree(), mixed, 1.0));
        instances.emplace_back(
            "mixed/trinomial",
            solve_instance(TreeMarket::trinomial(2, 0.5, 0.2, constant(1.0), kOne), mixed,
                           1.0));
        for (auto& [name, s] : instances) {
            IdentityReport ids = verify_identities(s.m, s.pair, *s.u, s.sp, s.rep);
            const bool here = ids.matrix_identity <= 1e-8 && ids.gap_identity <= 1e-8 &&
                              ids.pointwise_primal <= 1e-9 && ids.pointwise_dual <= 1e-9 &&
                              ids.max_martingale <= 1e-10;
            ok = ok && here;
            detail += fmt("%s[mat=%.0e gap=%.0e pw=%.0e mart=%.0e] ", name.c_str(),
                          ids.matrix_identity, ids.gap_identity,
                          std::max(ids.pointwise_primal, ids.pointwise_dual),
                          ids.max_martingale);
        }
        record(3, "identity suite", ok, detail, t.elapsed());
    }

    // ---- 4. second-order expansion order fits -------------------------------
    {
        Timer t;
        Instance s = solve_instance(standard_tree(), power_utility(0.5), 1.0);
        const std::vector<std::array<double, 2>> rays = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
        auto probes = probe_expansion(s.m, *s.u, s.rep, rays, kR0, kTGrid);
        bool ok = true;
        std::string detail = "slopes:";
        for (const auto& p : probes) {
            ok = ok && p.slope >= 2.5;
            detail += fmt(" (%g,%g)=%.2f", p.ray[0], p.ray[1], p.slope);
        }
        const double sec = t.elapsed();
        record(4, "second-order expansion", ok && sec < 30.0, detail, sec);
    }

    // ---- 5. first-order derivative ------------------------------------------
    {
        Timer t;
        Instance s = solve_instance(standard_tree(), power_utility(0.5), 1.0);
        const double fd = fd_u_delta(s.m, *s.u, 1.0, 1e-4);
        const double rel = std::abs(fd - s.rep.u_delta) / std::abs(s.rep.u_delta);
        record(5, "first-order derivative", rel <= 1e-6, fmt("|fd-xyE[F]|/|.|=%.2e", rel),
               t.elapsed());
    }

    // ---- 6. optimizer derivatives -------------------------------------------
    {
        Timer t;
        Instance s = solve_instance(standard_tree(), power_utility(0.5), 1.0);
        bool ok = true;
        double prev = -1.0;
        std::string detail = "dev/t:";
        for (double tt : kTGrid) {
            const double dx = tt * kR0, dd = tt * kR0;
            OptimalPair op = brute_solve(s.m, *s.u, 1.0 + dx, dd);
            auto pred = predict_optimizer_primal(s.pair, s.rep, dx, dd, op.ldelta);
            const double dev =
                (op.xhat_T - pred.multiplicative).cwiseAbs().maxCoeff() / (dx + dd);
            if (prev > 0.0) ok = ok && (dev <= prev / 1.5);
            detail += fmt(" %.1e", dev);
            prev = dev;
        }
        record(6, "optimizer derivatives", ok, detail, t.elapsed());
    }

    // ---- 7. KW equivalence ---------------------------------------------------
    {
        Timer t;
        bool ok = true;
        std::string detail;
        const auto mixed = mixed_power_utility({{1.0, 0.3}, {1.0, 0.7}});
        std::vector<std::pair<std::string, Instance>> instances;
        instances.emplace_back("power/binomial",
                               solve_instance(standard_tree(), power_utility(0.5), 1.0));
        instances.emplace_back("mixed/binomial",
                               solve_instance(standard_tree(), mixed, 1.0));
        instances.emplace_back(
            "power/trinomial",
            solve_instance(TreeMarket::trinomial(2, 0.5, 0.2, constant(1.0), kOne),
                           power_utility(0.5), 1.0));
        for (auto& [name, s] : instances) {
            if (!s.pair.rt_exists) {
                ok = false;
                detail += name + "[risk tolerance unexpectedly missing] ";
                continue;
            }
            KWDecomposition kw = kw_decompose(s.pair, s.m, *s.u, s.sp, s.rep.F, s.rep.G);
            KWHessian h = hessian_from_kw(kw, s.pair, s.rep.axx);
            const double coef_dev = std::max(
                std::max(std::abs(h.add - s.rep.add), std::abs(h.bdd - s.rep.bdd)),
                std::max(std::abs(h.axd - s.rep.axd), std::abs(h.byd - s.rep.byd)));
            const bool here = kw.recon_residual <= 1e-10 && kw.ortho_residual <= 1e-10 &&
                              coef_dev <= 1e-8;
            ok = ok && here;
            detail += fmt("%s[rec=%.0e orth=%.0e dev=%.0e] ", name.c_str(),
                          kw.recon_residual, kw.ortho_residual, coef_dev);
        }
        record(7, "KW equivalence", ok, detail, t.elapsed());
    }

    // ---- 8. corrected strategies ----------------------------------------------
    {
        Timer t;
        Instance s = solve_instance(standard_tree(), power_utility(0.5), 1.0);
        bool ok = true;
        std::vector<std::pair<double, double>> pts;
        double worst_deficit = 0.0;
        for (double tt : kTGrid) {
            const double dx = tt * kR0, dd = tt * kR0;
            CorrectedStrategy cs = make_corrected(s.pair, s.rep, s.sp, s.m, dx, dd);
            PathFunctional w = corrected_wealth(cs, s.m, s.pair);
            const double deficit =
                brute_solve(s.m, *s.u, 1.0 + dx, dd).u0 - expected_utility(s.m, *s.u, w);
            ok = ok && deficit >= -1e-12;
            worst_deficit = std::min(worst_deficit, deficit);
            pts.emplace_back(tt, std::max(deficit, 0.0));
        }
        const double slope = fit_order(pts);
        ok = ok && slope >= 2.5;
        record(8, "corrected strategies", ok,
               fmt("min deficit=%.1e slope=%.2f", worst_deficit, slope), t.elapsed());
    }

    // ---- 9. growth inequalities -----------------------------------------------
    {
        Timer t;
        std::vector<std::pair<double, double>> grid;
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 50; ++j)
                grid.emplace_back(std::pow(10.0, -3.0 + 6.0 * i / 49.0),
                                  std::pow(10.0, -3.0 + 6.0 * j / 49.0));
        int violations = 0;
        for (auto u : {power_utility(-1.0), power_utility(0.5), log_utility(),
                       mixed_power_utility({{1.0, 0.3}, {1.0, 0.7}})})
            violations +=
                static_cast<int>(check_growth_inequalities(*u, grid).violations.size());
        record(9, "growth inequalities", violations == 0,
               fmt("violations=%d over 4x2500 points", violations), t.elapsed());
    }

    // ---- 10. counterexample divergence ------------------------------------------
    {
        Timer t;
        using namespace mprs::mc;
        PathEnsemble ens(1000000, 256, 1.0, 911, 1, false);
        auto table = counterexample_probe(1.0, {1e2, 1e4, 1e6}, ens, 0.5, 4);
        bool ok = true;
        std::string detail = "moments:";
        for (std::size_t i = 0; i < table.size(); ++i) {
            detail += fmt(" K=%.0e:%.3g", table[i].first, table[i].second);
            if (i > 0) {
                const double decades = std::log10(table[i].first / table[i - 1].first);
                const double factor =
                    std::pow(table[i].second / table[i - 1].second, 1.0 / decades);
                ok = ok && factor >= 2.0;
            }
        }
        PathEnsemble ens0(1000000, 256, 1.0, 911, 2, false);
        const Estimate comp = weight_sanity(ens0, merton_baseline(0.5, 1, 1, 1, 1), 4);
        ok = ok && comp.value >= 0.99 && comp.value <= 1.01;
        detail += fmt(" comparator=%.4f", comp.value);
        const double sec = t.elapsed();
        record(10, "counterexample divergence", ok && sec < 60.0, detail, sec);
    }

    // ---- 11. MC vs tree ----------------------------------------------------------
    {
        Timer t;
        using namespace mprs::mc;
        const double lam = 1.0, sigma = 0.2, p = 0.5, nu = 1.0;
        MertonRecord model = merton_baseline(p, lam, sigma, 1.0, 1.0);
        PathEnsemble ens(100000, 256, 1.0, 20240814, 0, false);
        Estimate e =
            estimate_first_order(ens, model, [nu](double, double) { return nu; }, 4);
        auto U = power_utility(p);
        TreeMarket tree = TreeMarket::binomial(
            12, 1.0 / 12, sigma, [&](int, double) { return lam; },
            [&](int, double) { return nu; });
        OptimalPair pair = solve_unperturbed(tree, *U, 1.0);
        auto [F, G] = tree.compute_F_G();
        const double tree_ud = first_order(pair, F);
        const double sig = std::abs(e.value - tree_ud) / e.stderr_;
        const double sec = t.elapsed();
        record(11, "MC vs tree", sig <= 3.0 && sec < 30.0,
               fmt("mc=%.6f tree=%.6f |diff|/se=%.2f", e.value, tree_ud, sig), sec);
    }

    int failures = 0;
    for (const auto& c : results) failures += c.pass ? 0 : 1;
    std::printf("%s: %zu criteria, %d failed\n", failures == 0 ? "SUCCESS" : "FAILURE",
                results.size(), failures);
    return failures;
}
