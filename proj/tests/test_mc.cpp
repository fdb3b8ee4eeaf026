#include "doctest.h"

#include <cmath>

#include "mprs/mc.hpp"
#include "mprs/sensitivity.hpp"

using namespace mprs;
using namespace mprs::mc;

TEST_CASE("philox blocks are pure functions of key and counter") {
    auto a = Philox4x32::block(42, 7, 9);
    auto b = Philox4x32::block(42, 7, 9);
    CHECK(a == b);
    CHECK(Philox4x32::block(42, 7, 10) != a);
    CHECK(Philox4x32::block(43, 7, 9) != a);
    // Normal pairs are in a sane range and deterministic.
    auto z1 = normal_pair(1, 2, 3), z2 = normal_pair(1, 2, 3);
    CHECK(z1[0] == z2[0]);
    CHECK(std::abs(z1[0]) < 10.0);
}

TEST_CASE("increment sanity gate") {
    PathEnsemble ens(20000, 16, 1.0, 777, 0, false);
    IncrementSanity s = increment_sanity(ens, 20000);
    CHECK(s.ok());
}

TEST_CASE("merton baseline closed forms") {
    auto model = merton_baseline(0.5, 2.0, 0.2, 1.0, 1.0);
    CHECK(model.pi_star == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(model.axx == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(model.r0 == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(model.u0 == doctest::Approx(2.0 * std::exp(0.08)).epsilon(1e-14));
    CHECK(model.v0 == doctest::Approx(model.u0 - model.y).epsilon(1e-14));
    CHECK_THROWS_AS(merton_baseline(1.5, 1.0, 0.2, 1.0, 1.0), std::invalid_argument);

    SUBCASE("10-step tree oracle reproduces the closed forms") {
        auto U = power_utility(0.5);
        TreeMarket tree = TreeMarket::binomial(
            10, 0.1, 0.2, [](int, double) { return 2.0; }, [](int, double) { return 0.0; });
        OptimalPair pair = solve_unperturbed(tree, *U, 1.0);
        CHECK(std::abs(pair.u0 - model.u0) <= 2e-3);
        CHECK(std::abs(pair.pi_hat[0] - model.pi_star) / model.pi_star <= 0.02);
    }
}

TEST_CASE("first-order estimate") {
    auto model = merton_baseline(0.5, 1.0, 0.2, 1.0, 1.0);
    PathEnsemble ens(50000, 128, 1.0, 20240814, 0, false);
    SUBCASE("zero direction estimates exactly zero") {
        Estimate e = estimate_first_order(ens, model, [](double, double) { return 0.0; }, 2);
        CHECK(e.value == 0.0);
        CHECK(e.stderr_ == 0.0);
    }
    SUBCASE("constant direction matches the closed form within 4 sigma") {
        Estimate e = estimate_first_order(ens, model, [](double, double) { return 1.0; }, 2);
        const double closed = model.u_delta_const_nu(1.0);
        CHECK(std::abs(e.value - closed) <= 4.0 * e.stderr_);
    }
    SUBCASE("importance weights average to one within 5 sigma") {
        Estimate w = weight_sanity(ens, model, 2);
        CHECK(std::abs(w.value - 1.0) <= 5.0 * w.stderr_);
    }
    SUBCASE("reproducibility: identical layout, thread count irrelevant") {
        Estimate a = estimate_first_order(ens, model, [](double, double) { return 1.0; }, 1);
        Estimate b = estimate_first_order(ens, model, [](double, double) { return 1.0; }, 4);
        CHECK(a.value == b.value);
        CHECK(a.stderr_ == b.stderr_);
    }
    SUBCASE("antithetic pairing reduces the standard error") {
        PathEnsemble plain(50000, 128, 1.0, 31337, 0, false);
        PathEnsemble anti(50000, 128, 1.0, 31337, 0, true);
        Estimate a = estimate_first_order(plain, model, [](double, double) { return 1.0; }, 2);
        Estimate b = estimate_first_order(anti, model, [](double, double) { return 1.0; }, 2);
        CHECK(b.stderr_ < a.stderr_);
        const double closed = model.u_delta_const_nu(1.0);
        CHECK(std::abs(b.value - closed) <= 5.0 * std::max(b.stderr_, 1e-6));
    }
}

TEST_CASE("mc agrees with the 12-step tree value within 3 standard errors") {
    const double lam = 1.0, sigma = 0.2, p = 0.5, nu = 1.0;
    auto model = merton_baseline(p, lam, sigma, 1.0, 1.0);
    PathEnsemble ens(100000, 256, 1.0, 20240814, 0, false);
    Estimate e = estimate_first_order(ens, model, [nu](double, double) { return nu; }, 4);
    auto U = power_utility(p);
    TreeMarket tree = TreeMarket::binomial(
        12, 1.0 / 12, sigma, [&](int, double) { return lam; },
        [&](int, double) { return nu; });
    OptimalPair pair = solve_unperturbed(tree, *U, 1.0);
    auto [F, G] = tree.compute_F_G();
    const double tree_ud = first_order(pair, F);
    CHECK(std::abs(e.value - tree_ud) <= 3.0 * e.stderr_);
}

TEST_CASE("counterexample probe grows without saturation") {
    PathEnsemble ens(100000, 128, 1.0, 911, 1, false);
    auto table = counterexample_probe(1.0, {1e2, 1e4, 1e6}, ens, 0.5, 2);
    REQUIRE(table.size() == 3);
    for (std::size_t i = 1; i < table.size(); ++i) {
        const double decades = std::log10(table[i].first / table[i - 1].first);
        const double factor = std::pow(table[i].second / table[i - 1].second, 1.0 / decades);
        CHECK(factor >= 2.0);
    }
    SUBCASE("c = 0 pins all truncated moments at the weight mean") {
        auto flat = counterexample_probe(0.0, {1e2, 1e4}, ens, 0.5, 2);
        for (auto [K, v] : flat) CHECK(v == doctest::Approx(1.0).epsilon(2e-2));
    }
}

TEST_CASE("state-dependent direction: Euler integrals match the tree oracle") {
    // nu(t, B) = 0.5 + 0.5 B; the tree evaluates coefficients at the running
    // martingale state sigma B.
    const double lam = 1.0, sg = 0.2, p = 0.5;
    auto model = merton_baseline(p, lam, sg, 1.0, 1.0);
    PathEnsemble ens(200000, 512, 1.0, 20240814, 0, false);
    Estimate e = estimate_first_order(
        ens, model, [](double, double B) { return 0.5 + 0.5 * B; }, 2);
    auto U = power_utility(p);
    TreeMarket tree = TreeMarket::binomial(
        12, 1.0 / 12, sg, [&](int, double) { return lam; },
        [&](int, double s) { return 0.5 + 0.5 * (s / sg); });
    OptimalPair pair = solve_unperturbed(tree, *U, 1.0);
    auto [F, G] = tree.compute_F_G();
    CHECK(std::abs(e.value - first_order(pair, F)) <= 3.0 * e.stderr_);
}
