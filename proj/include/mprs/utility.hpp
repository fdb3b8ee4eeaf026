#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mprs {

/// Utility function on (0, inf) with certified relative-risk-aversion bounds
/// c1 <= A(x) = -x u''(x)/u'(x) <= c2 and conjugate V(y) = sup_x (U(x) - xy).
class Utility {
  public:
    virtual ~Utility() = default;

    virtual double u(double x) const = 0;
    virtual double du(double x) const = 0;
    virtual double d2u(double x) const = 0;

    virtual double v(double y) const = 0;
    virtual double dv(double y) const = 0;
    virtual double d2v(double y) const = 0;

    /// Inverse marginal utility (U')^{-1}(y) = -V'(y).
    double inv_du(double y) const { return -dv(y); }

    double A(double x) const { return -x * d2u(x) / du(x); }
    double B(double y) const { return -y * d2v(y) / dv(y); }

    double c1() const { return c1_; }
    double c2() const { return c2_; }
    const std::string& kind() const { return kind_; }

  protected:
    Utility(std::string kind, double c1, double c2)
        : kind_(std::move(kind)), c1_(c1), c2_(c2) {}
    std::string kind_;
    double c1_, c2_;
};

/// U(x) = x^p / p, p < 1, p != 0. A == 1 - p, V(y) = y^{-q}/q with q = p/(1-p).
std::shared_ptr<const Utility> power_utility(double p);

/// U(x) = log x. A == 1, V(y) = -log y - 1.
std::shared_ptr<const Utility> log_utility();

/// U(x) = sum_k w_k x^{p_k} / p_k with w_k > 0; conjugate by Newton inversion
/// of U'. Exact bounds c1 = min_k(1 - p_k), c2 = max_k(1 - p_k).
std::shared_ptr<const Utility> mixed_power_utility(
    const std::vector<std::pair<double, double>>& weight_p_terms);

/// Caller-supplied (u, du, d2u) with declared bounds; conjugate by inversion.
std::shared_ptr<const Utility> custom_utility(std::function<double(double)> u,
                                              std::function<double(double)> du,
                                              std::function<double(double)> d2u,
                                              double c1, double c2);

struct GrowthViolation {
    double z, x;
    double lhs, rhs;
    bool dual;  // false: U' inequality, true: -V' inequality
};

struct GrowthReport {
    std::vector<GrowthViolation> violations;
    int checked = 0;
    bool ok() const { return violations.empty(); }
};

/// Checks U'(zx) <= (z^{-c2}+1) U'(x) and -V'(zx) <= (z^{-1/c1}+1)(-V'(x))
/// on the given (z, x) grid. Report-only.
GrowthReport check_growth_inequalities(const Utility& u,
                                       const std::vector<std::pair<double, double>>& grid);

struct UtilityAudit {
    double max_bound_violation = 0.0;       // of c1 <= A(x) <= c2
    double max_conjugacy_rel_error = 0.0;   // dv(du(x)) = -x
    double max_ba_product_error = 0.0;      // B(du(x)) A(x) = 1
    double max_fd_rel_error_u = 0.0;        // finite-difference du vs du
    double max_fd_rel_error_v = 0.0;
    bool monotone_concave = true;           // du > 0, d2u < 0 on the grid
};

/// Verifies the declared invariants on a log-spaced grid in [lo, hi].
UtilityAudit audit_utility(const Utility& u, double lo = 1e-3, double hi = 1e3,
                           int n = 121);

}  // namespace mprs
