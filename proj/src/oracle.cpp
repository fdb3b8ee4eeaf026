#include "mprs/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mprs {

std::pair<double, double> golden_section_one_period(const TreeMarket& m, const Utility& U,
                                                    double x, double delta) {
    if (m.levels.size() != 2)
        throw std::invalid_argument("golden-section oracle expects a one-period tree");
    const TreeNode& root = m.nodes[0];
    const PathFunctional lam = m.l_delta_exp(delta);

    // Feasible 0-market proportions keep 1 + pi dS0 > 0 on every edge.
    double lo = -1e6, hi = 1e6;
    for (std::size_t s = 0; s < root.children.size(); ++s) {
        const double r = m.dS0(0, static_cast<int>(s));
        if (r > 0.0) lo = std::max(lo, -1.0 / r);
        if (r < 0.0) hi = std::min(hi, -1.0 / r);
    }
    auto value = [&](double pi) {
        double v = 0.0;
        for (std::size_t s = 0; s < root.children.size(); ++s)
            v += root.prob[s] *
                 U.u(x * (1.0 + pi * m.dS0(0, static_cast<int>(s))) / lam[s]);
        return v;
    };
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo + 1e-12 * (hi - lo), b = hi - 1e-12 * (hi - lo);
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = value(c), fd = value(d);
    for (int it = 0; it < 400 && (b - a) > 1e-13 * std::max(1.0, std::abs(a) + std::abs(b));
         ++it) {
        if (fc > fd) {
            b = d; d = c; fd = fc;
            c = b - gr * (b - a); fc = value(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + gr * (b - a); fd = value(d);
        }
    }
    const double pi = 0.5 * (a + b);
    // Report the perturbed-market proportion pi + delta nu.
    return {value(pi), pi + delta * root.nu};
}

double fit_order(const std::vector<std::pair<double, double>>& t_residual) {
    if (t_residual.size() < 3)
        throw std::invalid_argument("fit_order requires at least 3 points");
    double prev_t = std::numeric_limits<double>::infinity();
    bool all_tiny = true;
    for (auto [t, r] : t_residual) {
        if (!(t > 0.0) || t >= prev_t)
            throw std::invalid_argument("fit_order requires strictly decreasing t > 0");
        prev_t = t;
        if (r > 1e-14) all_tiny = false;
        if (r <= 0.0) return std::numeric_limits<double>::infinity();
    }
    if (all_tiny) return std::numeric_limits<double>::infinity();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(t_residual.size());
    for (auto [t, r] : t_residual) {
        const double lx = std::log(t), ly = std::log(r);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double fd_u_delta(const TreeMarket& m, const Utility& U, double x, double h) {
    auto central = [&](double step) {
        const double up = brute_solve(m, U, x, step).u0;
        const double dn = brute_solve(m, U, x, -step).u0;
        return (up - dn) / (2.0 * step);
    };
    const double d1 = central(h), d2 = central(h / 2.0);
    return (4.0 * d2 - d1) / 3.0;
}

double fd_u_cross(const TreeMarket& m, const Utility& U, double x, double h) {
    auto cross = [&](double step) {
        const double pp = brute_solve(m, U, x + step, step).u0;
        const double pm = brute_solve(m, U, x + step, -step).u0;
        const double mp = brute_solve(m, U, x - step, step).u0;
        const double mm = brute_solve(m, U, x - step, -step).u0;
        return (pp - pm - mp + mm) / (4.0 * step * step);
    };
    const double d1 = cross(h), d2 = cross(h / 2.0);
    return (4.0 * d2 - d1) / 3.0;
}

std::vector<RayProbe> probe_expansion(const TreeMarket& m, const Utility& U,
                                      const SensitivityReport& rep,
                                      const std::vector<std::array<double, 2>>& rays,
                                      double r0, const std::vector<double>& t_grid) {
    std::vector<RayProbe> probes;
    for (const auto& ray : rays) {
        RayProbe p;
        p.ray = ray;
        for (double t : t_grid) {
            const double dx = t * r0 * ray[0];
            const double delta = t * r0 * ray[1];
            const double uo = brute_solve(m, U, rep.x + dx, delta).u0;
            const double up = predict_u(rep, dx, delta);
            p.t.push_back(t);
            p.u_oracle.push_back(uo);
            p.u_pred.push_back(up);
            p.residual.push_back(std::abs(uo - up));
        }
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < p.t.size(); ++i) pts.emplace_back(p.t[i], p.residual[i]);
        std::sort(pts.begin(), pts.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });
        p.slope = fit_order(pts);
        probes.push_back(std::move(p));
    }
    return probes;
}

}  // namespace mprs
