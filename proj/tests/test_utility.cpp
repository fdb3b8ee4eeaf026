#include "doctest.h"

#include <cmath>

#include "mprs/utility.hpp"

using namespace mprs;

namespace {

// Independent oracle for the conjugate: golden-section maximization of
// U(x) - xy over a wide bracket.
double conjugate_by_search(const Utility& u, double y) {
    double a = 1e-9, b = 1e9;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    auto f = [&](double x) { return u.u(x) - x * y; };
    // Search over log-wealth for scale robustness.
    double la = std::log(a), lb = std::log(b);
    double lc = lb - gr * (lb - la), ld = la + gr * (lb - la);
    double fc = f(std::exp(lc)), fd = f(std::exp(ld));
    for (int it = 0; it < 300; ++it) {
        if (fc > fd) {
            lb = ld; ld = lc; fd = fc;
            lc = lb - gr * (lb - la); fc = f(std::exp(lc));
        } else {
            la = lc; lc = ld; fc = fd;
            ld = la + gr * (lb - la); fd = f(std::exp(ld));
        }
    }
    return f(std::exp(0.5 * (la + lb)));
}

}  // namespace

TEST_CASE("power utility closed forms") {
    auto u = power_utility(0.5);
    CHECK(u->A(0.3) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(u->A(7.0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(u->c1() == 0.5);
    CHECK(u->c2() == 0.5);
    // Conjugacy round trip at x = 4: dv(du(4)) = -4.
    CHECK(u->du(4.0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(u->dv(u->du(4.0)) == doctest::Approx(-4.0).epsilon(1e-14));

    auto u2 = power_utility(-1.0);
    CHECK(u2->A(1.7) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(u2->v(0.25) == doctest::Approx(-2.0 * std::sqrt(0.25)).epsilon(1e-14));
    // Conjugate algebra against the numerical sup over x.
    for (double y : {0.2, 1.0, 3.7})
        CHECK(u2->v(y) == doctest::Approx(conjugate_by_search(*u2, y)).epsilon(1e-9));
}

TEST_CASE("power utility rejects invalid exponents") {
    CHECK_THROWS_AS(power_utility(1.0), std::invalid_argument);
    CHECK_THROWS_AS(power_utility(1.5), std::invalid_argument);
    CHECK_THROWS_AS(power_utility(0.0), std::invalid_argument);
}

TEST_CASE("utility audits: derivatives, bounds, conjugacy round trip") {
    for (auto u : {power_utility(0.5), power_utility(-1.0), log_utility(),
                   mixed_power_utility({{1.0, 0.3}, {1.0, 0.7}})}) {
        const UtilityAudit a = audit_utility(*u);
        CAPTURE(u->kind());
        CHECK(a.monotone_concave);
        CHECK(a.max_bound_violation <= 1e-12);
        CHECK(a.max_conjugacy_rel_error <= 1e-12);
        CHECK(a.max_ba_product_error <= 1e-12);
        CHECK(a.max_fd_rel_error_u <= 1e-6);
        CHECK(a.max_fd_rel_error_v <= 1e-6);
    }
}

TEST_CASE("mixed power conjugate matches search oracle") {
    auto u = mixed_power_utility({{1.0, 0.3}, {1.0, 0.7}});
    CHECK(u->c1() == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(u->c2() == doctest::Approx(0.7).epsilon(1e-15));
    for (double y : {0.5, 1.0, 2.0, 10.0})
        CHECK(u->v(y) == doctest::Approx(conjugate_by_search(*u, y)).epsilon(1e-9));
}

TEST_CASE("growth inequalities") {
    SUBCASE("z = 1 reduces to a trivial bound") {
        auto u = power_utility(0.5);
        GrowthReport rep = check_growth_inequalities(*u, {{1.0, 0.5}, {1.0, 2.0}});
        CHECK(rep.ok());
    }
    SUBCASE("spot values") {
        auto u = power_utility(0.5);
        // U'(0.25) = 2 <= (0.25^{-0.5} + 1) U'(1) = 3
        CHECK(u->du(0.25) == doctest::Approx(2.0));
        CHECK((std::pow(0.25, -u->c2()) + 1.0) * u->du(1.0) == doctest::Approx(3.0));
        auto lg = log_utility();
        CHECK(lg->du(0.5 * 2.0) == doctest::Approx(1.0));
        CHECK((std::pow(0.5, -1.0 / lg->c1()) + 1.0) * lg->du(2.0) == doctest::Approx(1.5));
    }
    SUBCASE("50x50 log grid, all four utilities") {
        std::vector<std::pair<double, double>> grid;
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 50; ++j)
                grid.emplace_back(std::pow(10.0, -3.0 + 6.0 * i / 49.0),
                                  std::pow(10.0, -3.0 + 6.0 * j / 49.0));
        for (auto u : {power_utility(0.5), power_utility(-1.0), log_utility(),
                       mixed_power_utility({{1.0, 0.3}, {1.0, 0.7}})}) {
            GrowthReport rep = check_growth_inequalities(*u, grid);
            CAPTURE(u->kind());
            CHECK(rep.checked == 2500);
            CHECK(rep.violations.empty());
        }
    }
}

TEST_CASE("custom utility wraps callables and verifies declared bounds") {
    auto u = custom_utility([](double x) { return std::log(x); },
                            [](double x) { return 1.0 / x; },
                            [](double x) { return -1.0 / (x * x); }, 0.9, 1.1);
    const UtilityAudit a = audit_utility(*u);
    CHECK(a.monotone_concave);
    CHECK(a.max_bound_violation <= 1e-12);
    CHECK(a.max_conjugacy_rel_error <= 1e-10);
}
