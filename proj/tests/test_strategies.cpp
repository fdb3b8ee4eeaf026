#include "doctest.h"

#include <cmath>

#include "mprs/oracle.hpp"
#include "mprs/strategies.hpp"

using namespace mprs;

namespace {
const NodeFn kZero = [](int, double) { return 0.0; };
const NodeFn kOne = [](int, double) { return 1.0; };
NodeFn constant(double v) { return [v](int, double) { return v; }; }

struct Setup {
    TreeMarket m;
    OptimalPair pair;
    AttainableSpace sp;
    SensitivityReport rep;
};

Setup make(const TreeMarket& m, const Utility& u, double x) {
    Setup s{m, solve_unperturbed(m, u, x), {}, {}};
    risk_tolerance(s.pair, s.m, u);
    s.sp = build_attainable_space(s.pair, s.m);
    s.rep = analyze(s.m, s.pair, u, s.sp);
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
}  // namespace

TEST_CASE("select_epsilon fourth-root rule with clamp") {
    CHECK(select_epsilon(0.01, 0.0) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(select_epsilon(0.0, 1e-8) == doctest::Approx(1e-3).epsilon(1e-12));  // clamp
    CHECK(select_epsilon(1.0, 1.0) == 1.0);
    CHECK_THROWS_AS(select_epsilon(0.0, 0.0), std::invalid_argument);
    // Monotone in the offset norm.
    CHECK(select_epsilon(0.02, 0.02) > select_epsilon(0.01, 0.01));
}

TEST_CASE("gammas vanish for power utility (gamma0) and zero direction (both)") {
    SUBCASE("power utility has M0 = 0 hence gamma0 = 0") {
        Setup s = make(standard_tree(), *power_utility(0.5), 1.0);
        auto [g0, g1] = derive_gammas(s.pair, s.rep, s.sp, s.m);
        for (int id : s.m.internal) CHECK(std::abs(g0[id]) <= 1e-11);
    }
    SUBCASE("zero direction kills gamma1 for any utility") {
        Setup s = make(TreeMarket::binomial(2, 0.5, 0.2, constant(1.5), kZero),
                       *mixed_power_utility({{1.0, 0.3}, {1.0, 0.7}}), 1.0);
        auto [g0, g1] = derive_gammas(s.pair, s.rep, s.sp, s.m);
        for (int id : s.m.internal) CHECK(std::abs(g1[id]) <= 1e-14);
    }
    SUBCASE("zero direction and power utility kill both") {
        Setup s = make(TreeMarket::binomial(2, 0.5, 0.2, constant(1.5), kZero),
                       *power_utility(0.5), 1.0);
        auto [g0, g1] = derive_gammas(s.pair, s.rep, s.sp, s.m);
        for (int id : s.m.internal) {
            CHECK(std::abs(g0[id]) <= 1e-11);
            CHECK(std::abs(g1[id]) <= 1e-14);
        }
    }
}

TEST_CASE("gamma integrands reproduce M0/x and M1/x along every path") {
    for (auto u : {power_utility(0.5), mixed_power_utility({{1.0, 0.3}, {1.0, 0.7}})}) {
        Setup s = make(standard_tree(), *u, 1.0);
        auto [g0, g1] = derive_gammas(s.pair, s.rep, s.sp, s.m);
        CAPTURE(u->kind());
        CHECK(gamma_reconstruction_residual(s.m, s.pair, g0, s.rep.m0 / s.pair.x) <= 1e-9);
        CHECK(gamma_reconstruction_residual(s.m, s.pair, g1, s.rep.m1 / s.pair.x) <= 1e-9);
    }
    // Incomplete tree as well.
    Setup s = make(TreeMarket::trinomial(2, 0.5, 0.2, constant(1.0), kOne),
                   *power_utility(0.5), 1.0);
    auto [g0, g1] = derive_gammas(s.pair, s.rep, s.sp, s.m);
    CHECK(gamma_reconstruction_residual(s.m, s.pair, g1, s.rep.m1 / s.pair.x) <= 1e-9);
}

TEST_CASE("corrected wealth") {
    auto u = power_utility(0.5);
    Setup s = make(standard_tree(), *u, 1.0);
    SUBCASE("zero offsets reproduce the base optimizer exactly") {
        CorrectedStrategy cs = make_corrected_eps(s.pair, s.rep, s.sp, s.m, 0.0, 0.0, 1.0);
        PathFunctional w = corrected_wealth(cs, s.m, s.pair);
        CHECK((w - s.pair.xhat_T).cwiseAbs().maxCoeff() <= 1e-13);
    }
    SUBCASE("power homogeneity at delta = 0") {
        CorrectedStrategy cs = make_corrected(s.pair, s.rep, s.sp, s.m, 0.1, 0.0);
        PathFunctional w = corrected_wealth(cs, s.m, s.pair);
        CHECK((w - 1.1 * s.pair.xhat_T).cwiseAbs().maxCoeff() <= 1e-10);
        // And it attains u(x + dx, 0) exactly by homogeneity.
        const double uo = solve_unperturbed(s.m, *u, 1.1).u0;
        CHECK(expected_utility(s.m, *u, w) == doctest::Approx(uo).epsilon(1e-13));
    }
    SUBCASE("feasibility: deficit is non-negative") {
        for (double t : {1.0, 0.5, 0.25}) {
            const double dx = 0.05 * t, dd = 0.05 * t;
            CorrectedStrategy cs = make_corrected(s.pair, s.rep, s.sp, s.m, dx, dd);
            PathFunctional w = corrected_wealth(cs, s.m, s.pair);
            const double deficit =
                brute_solve(s.m, *u, 1.0 + dx, dd).u0 - expected_utility(s.m, *u, w);
            CHECK(deficit >= -1e-12);
        }
    }
    SUBCASE("matching order: deficit is o(t^2) along the diagonal ray") {
        std::vector<std::pair<double, double>> pts;
        for (double t : {0.25, 0.125, 0.0625, 0.03125, 0.015625}) {
            const double dx = 0.05 * t, dd = 0.05 * t;
            CorrectedStrategy cs = make_corrected(s.pair, s.rep, s.sp, s.m, dx, dd);
            PathFunctional w = corrected_wealth(cs, s.m, s.pair);
            const double deficit =
                brute_solve(s.m, *u, 1.0 + dx, dd).u0 - expected_utility(s.m, *u, w);
            pts.emplace_back(t, std::max(deficit, 0.0));
        }
        CHECK(fit_order(pts) >= 2.5);
    }
}

TEST_CASE("matching order for the mixed-power utility (gamma0 active)") {
    auto u = mixed_power_utility({{1.0, 0.3}, {1.0, 0.7}});
    Setup s = make(standard_tree(), *u, 1.0);
    std::vector<std::pair<double, double>> pts;
    for (double t : {0.25, 0.125, 0.0625, 0.03125, 0.015625}) {
        const double dx = 0.05 * t, dd = 0.05 * t;
        CorrectedStrategy cs = make_corrected(s.pair, s.rep, s.sp, s.m, dx, dd);
        PathFunctional w = corrected_wealth(cs, s.m, s.pair);
        const double deficit =
            brute_solve(s.m, *u, 1.0 + dx, dd).u0 - expected_utility(s.m, *u, w);
        CHECK(deficit >= -1e-12);
        pts.emplace_back(t, std::max(deficit, 0.0));
    }
    CHECK(fit_order(pts) >= 2.5);
}

TEST_CASE("truncation") {
    auto u = power_utility(0.5);
    Setup s = make(standard_tree(), *u, 1.0);
    SUBCASE("inactive for small offsets") {
        CorrectedStrategy cs = make_corrected(s.pair, s.rep, s.sp, s.m, 0.001, 0.001);
        CHECK(truncation_inactive(cs));
    }
    SUBCASE("gamma^{i,eps} equals gamma^i when eps exceeds the tree maxima") {
        CorrectedStrategy a = make_corrected_eps(s.pair, s.rep, s.sp, s.m, 0.02, 0.02, 1e-3);
        CHECK(truncation_inactive(a));
        // A tiny x/eps cap (huge eps beyond the clamp is not reachable through
        // select_epsilon, so force one directly) must stop the M1 integrand:
        // M0 = 0 for power utility, so only tau_eps can trigger.
        CorrectedStrategy b = make_corrected_eps(s.pair, s.rep, s.sp, s.m, 0.02, 0.02, 1e9);
        bool any_stopped = false;
        for (char f : b.active1) any_stopped = any_stopped || !f;
        CHECK(any_stopped);
    }
}

TEST_CASE("positivity violation is reported with the offending node") {
    auto u = power_utility(0.5);
    Setup s = make(standard_tree(), *u, 1.0);
    CorrectedStrategy cs = make_corrected_eps(s.pair, s.rep, s.sp, s.m, 0.0, 0.01, 1.0);
    for (auto& g : cs.gamma1) g = 1e4;  // absurd integrand forces a negative factor
    CHECK_THROWS_AS(corrected_wealth(cs, s.m, s.pair), PositivityViolation);
}
