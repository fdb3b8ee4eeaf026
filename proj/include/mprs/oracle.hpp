#pragma once

#include <array>

#include "mprs/sensitivity.hpp"

namespace mprs {

/// Exact brute-force solve of the perturbed problem u(x, delta). Identical
/// engine to the base solver running on the delta-market returns; delta = 0
/// reproduces solve_unperturbed bit for bit.
inline OptimalPair brute_solve(const TreeMarket& m, const Utility& U, double x,
                               double delta) {
    return solve_perturbed(m, U, x, delta);
}

/// Scalar golden-section oracle for one-period trees: maximizes the expected
/// utility over the single proportion to 1e-12 and returns (value, pi).
std::pair<double, double> golden_section_one_period(const TreeMarket& m, const Utility& U,
                                                    double x, double delta);

/// Least-squares slope of log(residual) vs log(t). Points with residual at or
/// below 1e-14 short-circuit to +infinity (DegenerateFit sentinel).
double fit_order(const std::vector<std::pair<double, double>>& t_residual);

/// Central difference of u(x, .) at delta = 0 with one Richardson refinement.
double fd_u_delta(const TreeMarket& m, const Utility& U, double x, double h = 1e-4);

/// Central mixed difference d2u/(dx ddelta) at (x, 0), Richardson-refined.
double fd_u_cross(const TreeMarket& m, const Utility& U, double x, double h = 1e-2);

struct RayProbe {
    std::array<double, 2> ray;          // direction (in dx, in delta)
    std::vector<double> t;              // scales
    std::vector<double> u_oracle;
    std::vector<double> u_pred;
    std::vector<double> residual;       // |u_oracle - u_pred|
    double slope = 0.0;
};

/// Oracle-vs-expansion residuals along scaled rays t * r0 * ray.
std::vector<RayProbe> probe_expansion(const TreeMarket& m, const Utility& U,
                                      const SensitivityReport& rep,
                                      const std::vector<std::array<double, 2>>& rays,
                                      double r0, const std::vector<double>& t_grid);

}  // namespace mprs
