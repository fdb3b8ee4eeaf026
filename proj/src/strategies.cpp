#include "mprs/strategies.hpp"

#include <cmath>

namespace mprs {

double mr_increment(const TreeMarket& m, const OptimalPair& pair, int node, int slot) {
    const double ds = m.dS0(node, slot);
    return ds / (1.0 + pair.pi_hat[node] * ds);
}

namespace {

// gamma_n = (theta_n - W_n pi_hat_n)/xhat_n for the zero-capital portfolio
// with per-node amounts theta: then gamma . M^R has exactly the increments of
// x W/xhat over each edge, divided by x.
std::vector<double> gamma_from_theta(const TreeMarket& m, const OptimalPair& pair,
                                     const AttainableSpace& sp,
                                     const Eigen::VectorXd& theta,
                                     const PathFunctional& target_over_x) {
    std::vector<double> amounts(m.nodes.size(), 0.0);
    for (int j = 0; j < theta.size(); ++j) amounts[sp.basis_node[j]] = theta[j];
    std::vector<double> W(m.nodes.size(), 0.0), gamma(m.nodes.size(), 0.0);
    for (const auto& layer : m.levels)
        for (int id : layer) {
            const TreeNode& n = m.nodes[id];
            if (n.children.empty()) continue;
            double mx = 0.0;
            for (std::size_t s = 0; s < n.children.size(); ++s)
                mx = std::max(mx, std::abs(m.dS0(id, static_cast<int>(s))));
            if (mx == 0.0) {
                if (amounts[id] != 0.0) throw DegenerateIncrement(id);
                gamma[id] = 0.0;
            } else {
                gamma[id] =
                    (amounts[id] - W[id] * pair.pi_hat[id]) / pair.base_wealth_node[id];
            }
            for (std::size_t s = 0; s < n.children.size(); ++s)
                W[n.children[s]] = W[id] + amounts[id] * m.dS0(id, static_cast<int>(s));
        }
    (void)target_over_x;
    return gamma;
}

struct StopState {
    std::vector<char> active;  // per node id
};

// 1_{[0, sigma_eps]}: an edge out of n is active iff neither |M| >= x/eps nor
// <M> >= x/eps has been hit at n or any earlier node on the path.
StopState stopping_flags(const TreeMarket& m, const OptimalPair& pair,
                         const std::vector<double>& mproc, double eps) {
    StopState st;
    st.active.assign(m.nodes.size(), 1);
    const double cap = pair.x / eps;
    std::vector<double> qv_acc(m.nodes.size(), 0.0);
    std::vector<char> stopped(m.nodes.size(), 0);
    for (const auto& layer : m.levels)
        for (int id : layer) {
            const TreeNode& n = m.nodes[id];
            const bool hit = std::abs(mproc[id]) >= cap || qv_acc[id] >= cap;
            const bool stop_here = stopped[id] || hit;
            st.active[id] = stop_here ? 0 : 1;
            if (n.children.empty()) continue;
            // R-conditional predictable quadratic variation increment.
            double num = 0.0, den = 0.0, inc = 0.0;
            for (std::size_t c = 0; c < n.children.size(); ++c) {
                const double w = n.prob[c] * pair.deflator_node[n.children[c]] *
                                 pair.wealth_node[n.children[c]];
                const double dm = mproc[n.children[c]] - mproc[id];
                num += w * dm * dm;
                den += w;
            }
            if (den > 0.0) inc = num / den;
            for (std::size_t c = 0; c < n.children.size(); ++c) {
                qv_acc[n.children[c]] = qv_acc[id] + inc;
                stopped[n.children[c]] = stop_here ? 1 : 0;
            }
        }
    return st;
}

}  // namespace

std::pair<std::vector<double>, std::vector<double>> derive_gammas(
    const OptimalPair& pair, const SensitivityReport& rep, const AttainableSpace& sp,
    const TreeMarket& m) {
    auto g0 = gamma_from_theta(m, pair, sp, rep.m0_theta, rep.m0 / pair.x);
    auto g1 = gamma_from_theta(m, pair, sp, rep.m1_theta, rep.m1 / pair.x);
    return {g0, g1};
}

double gamma_reconstruction_residual(const TreeMarket& m, const OptimalPair& pair,
                                     const std::vector<double>& gamma,
                                     const PathFunctional& target_over_x) {
    double worst = 0.0;
    for (int l = 0; l < m.n_leaves(); ++l) {
        double acc = 0.0;
        for (int id : m.path_nodes(l))
            acc += gamma[id] * mr_increment(m, pair, id, m.slot_on_path(id, l));
        worst = std::max(worst, std::abs(acc - target_over_x[l]));
    }
    return worst;
}

double select_epsilon(double dx, double delta, double eps_min, double eps_max) {
    if (dx == 0.0 && delta == 0.0)
        throw std::invalid_argument("select_epsilon requires (dx, delta) != (0,0)");
    const double eps = std::pow(dx * dx + delta * delta, 0.25);
    return std::clamp(eps, eps_min, eps_max);
}

CorrectedStrategy make_corrected_eps(const OptimalPair& pair, const SensitivityReport& rep,
                                     const AttainableSpace& sp, const TreeMarket& m,
                                     double dx, double delta, double eps) {
    CorrectedStrategy cs;
    cs.dx = dx;
    cs.delta = delta;
    cs.eps = eps;
    cs.pi_hat = pair.pi_hat;
    auto [g0, g1] = derive_gammas(pair, rep, sp, m);
    cs.gamma0 = std::move(g0);
    cs.gamma1 = std::move(g1);
    const auto m0p = attainable_process(m, pair, sp, rep.m0_theta);
    const auto m1p = attainable_process(m, pair, sp, rep.m1_theta);
    cs.active0 = stopping_flags(m, pair, m0p, eps).active;
    cs.active1 = stopping_flags(m, pair, m1p, eps).active;
    return cs;
}

CorrectedStrategy make_corrected(const OptimalPair& pair, const SensitivityReport& rep,
                                 const AttainableSpace& sp, const TreeMarket& m, double dx,
                                 double delta) {
    return make_corrected_eps(pair, rep, sp, m, dx, delta, select_epsilon(dx, delta));
}

PathFunctional corrected_wealth(const CorrectedStrategy& cs, const TreeMarket& m,
                                const OptimalPair& pair) {
    const PathFunctional ld = m.l_delta_exp(cs.delta);
    PathFunctional out(m.n_leaves());
    for (int l = 0; l < m.n_leaves(); ++l) {
        double w = pair.x + cs.dx;
        for (int id : m.path_nodes(l)) {
            const double phi = cs.pi_hat[id] + cs.dx * cs.gamma0[id] * cs.active0[id] +
                               cs.delta * cs.gamma1[id] * cs.active1[id];
            const double factor = 1.0 + phi * m.dS0(id, m.slot_on_path(id, l));
            if (!(factor > 0.0)) throw PositivityViolation(id, factor);
            w *= factor;
        }
        out[l] = w / ld[l];
        if (!(out[l] > 0.0)) throw PositivityViolation(m.leaves[l], out[l]);
    }
    return out;
}

bool truncation_inactive(const CorrectedStrategy& cs) {
    for (std::size_t i = 0; i < cs.active0.size(); ++i)
        if (!cs.active0[i] || !cs.active1[i]) return false;
    return true;
}

}  // namespace mprs
