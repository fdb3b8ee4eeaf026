#include "doctest.h"

#include <cmath>
#include <limits>

#include "mprs/oracle.hpp"

using namespace mprs;

namespace {
const NodeFn kOne = [](int, double) { return 1.0; };
NodeFn constant(double v) { return [v](int, double) { return v; }; }

TreeMarket standard_tree() {
    return TreeMarket::binomial(4, 0.25, 0.2, constant(2.0), kOne);
}
}  // namespace

TEST_CASE("fit_order on synthetic data") {
    SUBCASE("cubic") {
        std::vector<std::pair<double, double>> pts;
        for (double t : {0.25, 0.125, 0.0625, 0.03125})
            pts.emplace_back(t, t * t * t);
        CHECK(fit_order(pts) == doctest::Approx(3.0).epsilon(1e-12));
    }
    SUBCASE("quadratic") {
        std::vector<std::pair<double, double>> pts;
        for (double t : {0.5, 0.25, 0.125}) pts.emplace_back(t, t * t);
        CHECK(fit_order(pts) == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("degenerate residuals short-circuit to infinity") {
        std::vector<std::pair<double, double>> pts = {
            {0.25, 1e-15}, {0.125, 1e-16}, {0.0625, 1e-17}};
        CHECK(std::isinf(fit_order(pts)));
        std::vector<std::pair<double, double>> zero = {
            {0.25, 1e-3}, {0.125, 0.0}, {0.0625, 1e-5}};
        CHECK(std::isinf(fit_order(zero)));
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(fit_order({{0.25, 1.0}, {0.125, 0.5}}), std::invalid_argument);
        CHECK_THROWS_AS(fit_order({{0.125, 1.0}, {0.25, 0.5}, {0.5, 0.1}}),
                        std::invalid_argument);
    }
}

TEST_CASE("oracle self-consistency: conjugacy along the delta probe set") {
    TreeMarket m = standard_tree();
    auto u = power_utility(0.5);
    for (double delta : {0.0, 0.02, -0.02, 0.05}) {
        OptimalPair pair = brute_solve(m, *u, 1.0, delta);
        // y_delta from a finite difference of u in x.
        const double h = 1e-5;
        const double y_fd = (brute_solve(m, *u, 1.0 + h, delta).u0 -
                             brute_solve(m, *u, 1.0 - h, delta).u0) / (2 * h);
        CHECK(pair.y == doctest::Approx(y_fd).epsilon(1e-8));
        DualSolution dual = dual_solve(m, *u, pair.y, delta);
        CHECK(std::abs(pair.u0 - dual.value - pair.x * pair.y) <= 1e-8);
    }
}

TEST_CASE("first-order consistency of the oracle") {
    TreeMarket m = standard_tree();
    auto u = power_utility(0.5);
    OptimalPair pair = solve_unperturbed(m, *u, 1.0);
    AttainableSpace sp = build_attainable_space(pair, m);
    SensitivityReport rep = analyze(m, pair, *u, sp);
    const double fd = fd_u_delta(m, *u, 1.0);
    CHECK(std::abs(fd - rep.u_delta) / std::abs(rep.u_delta) <= 1e-6);
}

TEST_CASE("expansion probes deliver slope >= 2.5 on the standard tree") {
    TreeMarket m = standard_tree();
    auto u = power_utility(0.5);
    OptimalPair pair = solve_unperturbed(m, *u, 1.0);
    AttainableSpace sp = build_attainable_space(pair, m);
    SensitivityReport rep = analyze(m, pair, *u, sp);
    const std::vector<std::array<double, 2>> rays = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
    const std::vector<double> tg = {0.25, 0.125, 0.0625, 0.03125, 0.015625};
    auto probes = probe_expansion(m, *u, rep, rays, 0.05, tg);
    REQUIRE(probes.size() == 4);
    for (const auto& p : probes) {
        CAPTURE(p.ray[0]);
        CAPTURE(p.ray[1]);
        CHECK(p.slope >= 2.5);
    }
}
