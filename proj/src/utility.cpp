#include "mprs/utility.hpp"

#include <cmath>
#include <stdexcept>

namespace mprs {

namespace {

class PowerUtility final : public Utility {
  public:
    explicit PowerUtility(double p)
        : Utility("power", 1.0 - p, 1.0 - p), p_(p), q_(p / (1.0 - p)) {
        if (p >= 1.0 || p == 0.0)
            throw std::invalid_argument("power utility requires p < 1, p != 0");
    }
    double u(double x) const override { return std::pow(x, p_) / p_; }
    double du(double x) const override { return std::pow(x, p_ - 1.0); }
    double d2u(double x) const override { return (p_ - 1.0) * std::pow(x, p_ - 2.0); }
    double v(double y) const override { return std::pow(y, -q_) / q_; }
    double dv(double y) const override { return -std::pow(y, -1.0 / (1.0 - p_)); }
    double d2v(double y) const override {
        return std::pow(y, -1.0 / (1.0 - p_) - 1.0) / (1.0 - p_);
    }

  private:
    double p_, q_;
};

class LogUtility final : public Utility {
  public:
    LogUtility() : Utility("log", 1.0, 1.0) {}
    double u(double x) const override { return std::log(x); }
    double du(double x) const override { return 1.0 / x; }
    double d2u(double x) const override { return -1.0 / (x * x); }
    double v(double y) const override { return -std::log(y) - 1.0; }
    double dv(double y) const override { return -1.0 / y; }
    double d2v(double y) const override { return 1.0 / (y * y); }
};

// Conjugate pieces derived from a monotone-decreasing marginal utility via
// safeguarded Newton on du(x) = y. V(y) = U(I(y)) - I(y) y, V'(y) = -I(y),
// V''(y) = -1/U''(I(y)).
class InvertedConjugate {
  public:
    InvertedConjugate(std::function<double(double)> du, std::function<double(double)> d2u)
        : du_(std::move(du)), d2u_(std::move(d2u)) {}

    double invert(double y) const {
        if (!(y > 0.0)) throw std::invalid_argument("marginal utility argument must be > 0");
        // Bracket by doubling from x = 1.
        double lo = 1.0, hi = 1.0;
        if (du_(1.0) > y) {
            while (du_(hi) > y) { lo = hi; hi *= 2.0; if (hi > 1e300) throw std::runtime_error("inv_du bracket overflow"); }
        } else {
            while (du_(lo) < y) { hi = lo; lo *= 0.5; if (lo < 1e-300) throw std::runtime_error("inv_du bracket underflow"); }
        }
        double x = 0.5 * (lo + hi);
        for (int it = 0; it < 200; ++it) {
            const double f = du_(x) - y;
            if (f > 0.0) lo = x; else hi = x;
            const double step = f / d2u_(x);
            double xn = x - step;
            if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
            const double rel = std::abs(xn - x) / x;
            x = xn;
            if (rel < 1e-16) break;
        }
        return x;
    }

  private:
    std::function<double(double)> du_, d2u_;
};

class MixedPowerUtility final : public Utility {
  public:
    explicit MixedPowerUtility(std::vector<std::pair<double, double>> terms)
        : Utility("mixed_power", 0.0, 0.0), terms_(std::move(terms)),
          inv_([this](double x) { return du_impl(x); },
               [this](double x) { return d2u_impl(x); }) {
        if (terms_.empty()) throw std::invalid_argument("mixed power needs >= 1 term");
        double c1 = 1e300, c2 = -1e300;
        for (auto [w, p] : terms_) {
            if (w <= 0.0) throw std::invalid_argument("mixed power weights must be > 0");
            if (p >= 1.0 || p == 0.0)
                throw std::invalid_argument("mixed power requires p < 1, p != 0");
            c1 = std::min(c1, 1.0 - p);
            c2 = std::max(c2, 1.0 - p);
        }
        c1_ = c1;
        c2_ = c2;
    }
    double u(double x) const override {
        double s = 0.0;
        for (auto [w, p] : terms_) s += w * std::pow(x, p) / p;
        return s;
    }
    double du(double x) const override { return du_impl(x); }
    double d2u(double x) const override { return d2u_impl(x); }
    double v(double y) const override {
        const double x = inv_.invert(y);
        return u(x) - x * y;
    }
    double dv(double y) const override { return -inv_.invert(y); }
    double d2v(double y) const override { return -1.0 / d2u_impl(inv_.invert(y)); }

  private:
    double du_impl(double x) const {
        double s = 0.0;
        for (auto [w, p] : terms_) s += w * std::pow(x, p - 1.0);
        return s;
    }
    double d2u_impl(double x) const {
        double s = 0.0;
        for (auto [w, p] : terms_) s += w * (p - 1.0) * std::pow(x, p - 2.0);
        return s;
    }
    std::vector<std::pair<double, double>> terms_;
    InvertedConjugate inv_;
};

class CustomUtility final : public Utility {
  public:
    CustomUtility(std::function<double(double)> u, std::function<double(double)> du,
                  std::function<double(double)> d2u, double c1, double c2)
        : Utility("custom", c1, c2), u_(std::move(u)), du_(std::move(du)),
          d2u_(std::move(d2u)), inv_(du_, d2u_) {
        if (!(c1 > 0.0) || !(c2 >= c1))
            throw std::invalid_argument("custom utility requires 0 < c1 <= c2");
    }
    double u(double x) const override { return u_(x); }
    double du(double x) const override { return du_(x); }
    double d2u(double x) const override { return d2u_(x); }
    double v(double y) const override {
        const double x = inv_.invert(y);
        return u_(x) - x * y;
    }
    double dv(double y) const override { return -inv_.invert(y); }
    double d2v(double y) const override { return -1.0 / d2u_(inv_.invert(y)); }

  private:
    std::function<double(double)> u_, du_, d2u_;
    InvertedConjugate inv_;
};

}  // namespace

std::shared_ptr<const Utility> power_utility(double p) {
    return std::make_shared<PowerUtility>(p);
}

std::shared_ptr<const Utility> log_utility() { return std::make_shared<LogUtility>(); }

std::shared_ptr<const Utility> mixed_power_utility(
    const std::vector<std::pair<double, double>>& weight_p_terms) {
    return std::make_shared<MixedPowerUtility>(weight_p_terms);
}

std::shared_ptr<const Utility> custom_utility(std::function<double(double)> u,
                                              std::function<double(double)> du,
                                              std::function<double(double)> d2u,
                                              double c1, double c2) {
    return std::make_shared<CustomUtility>(std::move(u), std::move(du), std::move(d2u), c1,
                                           c2);
}

GrowthReport check_growth_inequalities(const Utility& u,
                                       const std::vector<std::pair<double, double>>& grid) {
    GrowthReport rep;
    for (auto [z, x] : grid) {
        if (!(z > 0.0) || !(x > 0.0))
            throw std::invalid_argument("growth grid requires z, x > 0");
        ++rep.checked;
        const double lhs_u = u.du(z * x);
        const double rhs_u = (std::pow(z, -u.c2()) + 1.0) * u.du(x);
        if (lhs_u > rhs_u * (1.0 + 1e-12))
            rep.violations.push_back({z, x, lhs_u, rhs_u, false});
        const double lhs_v = -u.dv(z * x);
        const double rhs_v = (std::pow(z, -1.0 / u.c1()) + 1.0) * (-u.dv(x));
        if (lhs_v > rhs_v * (1.0 + 1e-12))
            rep.violations.push_back({z, x, lhs_v, rhs_v, true});
    }
    return rep;
}

UtilityAudit audit_utility(const Utility& u, double lo, double hi, int n) {
    UtilityAudit a;
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < n; ++i) {
        const double x = std::exp(llo + (lhi - llo) * i / (n - 1));
        const double dux = u.du(x);
        if (!(dux > 0.0) || !(u.d2u(x) < 0.0)) a.monotone_concave = false;
        const double ax = u.A(x);
        a.max_bound_violation =
            std::max({a.max_bound_violation, u.c1() - ax, ax - u.c2()});
        a.max_conjugacy_rel_error =
            std::max(a.max_conjugacy_rel_error, std::abs(u.dv(dux) + x) / x);
        a.max_ba_product_error =
            std::max(a.max_ba_product_error, std::abs(u.B(dux) * ax - 1.0));
        // Central five-point difference of u against du (and of v against dv).
        const double h = 1e-4 * x;
        const double fd_u =
            (-u.u(x + 2 * h) + 8 * u.u(x + h) - 8 * u.u(x - h) + u.u(x - 2 * h)) / (12 * h);
        a.max_fd_rel_error_u =
            std::max(a.max_fd_rel_error_u, std::abs(fd_u - dux) / std::abs(dux));
        const double y = dux, hy = 1e-4 * y;
        const double fd_v =
            (-u.v(y + 2 * hy) + 8 * u.v(y + hy) - 8 * u.v(y - hy) + u.v(y - 2 * hy)) /
            (12 * hy);
        a.max_fd_rel_error_v =
            std::max(a.max_fd_rel_error_v, std::abs(fd_v - u.dv(y)) / std::abs(u.dv(y)));
    }
    return a;
}

}  // namespace mprs
