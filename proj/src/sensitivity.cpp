#include "mprs/sensitivity.hpp"

#include <cmath>

namespace mprs {

namespace {

// Minimum-norm solve of M theta = -q with symmetric pseudo-inverse fallback
// (singular values below 1e-12 of the largest are discarded).
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& M, const Eigen::VectorXd& q) {
    if (M.rows() == 0) return Eigen::VectorXd();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        Eigen::VectorXd theta = ldlt.solve(-q);
        if ((M * theta + q).norm() <= 1e-10 * std::max(1.0, q.norm())) return theta;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double cutoff = 1e-12 * ev.cwiseAbs().maxCoeff();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] > cutoff) inv[i] = 1.0 / ev[i];
    return -(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * q);
}

Eigen::VectorXd weight_A(const OptimalPair& pair, const Utility& U) {
    Eigen::VectorXd w(pair.xhat_T.size());
    for (int l = 0; l < w.size(); ++l) w[l] = U.A(pair.xhat_T[l]);
    return w;
}

Eigen::VectorXd weight_B(const OptimalPair& pair, const Utility& U) {
    Eigen::VectorXd w(pair.yhat_T.size());
    for (int l = 0; l < w.size(); ++l) w[l] = U.B(pair.yhat_T[l]);
    return w;
}

// Quadratic program min_theta E_r[w (B theta)^2] + 2 q.theta + c0 over the
// columns of B (either basis or nbasis).
QuadSolution run_quadratic(const Eigen::VectorXd& r, const Eigen::MatrixXd& B,
                           const Eigen::VectorXd& w, const Eigen::VectorXd& q, double c0) {
    QuadSolution sol;
    const Eigen::MatrixXd Mw = B.transpose() * (r.cwiseProduct(w)).asDiagonal() * B;
    sol.coef = solve_normal_equations(Mw, q);
    sol.functional = (sol.coef.size() > 0) ? PathFunctional(B * sol.coef)
                                           : PathFunctional(PathFunctional::Zero(r.size()));
    sol.value = c0;
    if (sol.coef.size() > 0)
        sol.value += sol.coef.dot(Mw * sol.coef) + 2.0 * q.dot(sol.coef);
    return sol;
}

}  // namespace

AttainableSpace build_attainable_space(const OptimalPair& pair, const TreeMarket& m) {
    if (pair.delta != 0.0)
        throw std::invalid_argument("attainable space is built at the base point delta = 0");
    AttainableSpace sp;
    const int L = m.n_leaves();
    sp.r = pair.r_weights;

    std::vector<Eigen::VectorXd> cols;
    for (int id : m.internal) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(L);
        const TreeNode& n = m.nodes[id];
        double norm2 = 0.0;
        for (int l = n.leaf_lo; l < n.leaf_hi; ++l) {
            b[l] = pair.x * m.dS0(id, m.slot_on_path(id, l)) / pair.xhat_T[l];
            norm2 += sp.r[l] * b[l] * b[l];
        }
        if (norm2 <= 0.0) continue;  // flat node: no tradable direction
        const double s = std::sqrt(norm2);
        sp.basis_node.push_back(id);
        cols.push_back(b / s);
        sp.basis_scale.conservativeResize(static_cast<int>(cols.size()));
        sp.basis_scale[static_cast<int>(cols.size()) - 1] = s;
    }
    const int K = static_cast<int>(cols.size());
    sp.basis.resize(L, K);
    for (int j = 0; j < K; ++j) sp.basis.col(j) = cols[j];
    sp.gram = sp.basis.transpose() * sp.r.asDiagonal() * sp.basis;
    for (int j = 0; j < K; ++j)
        sp.max_basis_mean =
            std::max(sp.max_basis_mean, std::abs(sp.r.dot(sp.basis.col(j))));

    // Complement of span{1} + M^2 under the r inner product, via full QR of
    // sqrt(r)-scaled columns. Complete markets (one bet per step of every
    // path) span everything already, so the complement is empty.
    if (K + 1 == L) {
        sp.nbasis.resize(L, 0);
        return sp;
    }
    Eigen::VectorXd sqr = sp.r.cwiseSqrt();
    Eigen::MatrixXd Phi(L, K + 1);
    Phi.col(0) = sqr;
    for (int j = 0; j < K; ++j) Phi.col(j + 1) = sqr.cwiseProduct(sp.basis.col(j));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Phi);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(L, L);
    Eigen::MatrixXd R = qr.matrixQR().topRows(K + 1).triangularView<Eigen::Upper>();
    int rank = 0;
    for (int j = 0; j < K + 1; ++j)
        if (std::abs(R(j, j)) > 1e-12 * std::abs(R(0, 0))) ++rank;
    if (rank != K + 1)
        throw std::logic_error("attainable basis is rank-deficient after flat-node pruning");
    const int Kn = L - rank;
    sp.nbasis.resize(L, Kn);
    for (int j = 0; j < Kn; ++j)
        sp.nbasis.col(j) = Q.col(rank + j).cwiseQuotient(sqr);
    return sp;
}

QuadSolution solve_axx(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U) {
    const Eigen::VectorXd w = weight_A(pair, U);
    const Eigen::VectorXd rw = sp.r.cwiseProduct(w);
    const Eigen::VectorXd q = sp.basis.transpose() * rw;  // E_r[A b]
    QuadSolution sol = run_quadratic(sp.r, sp.basis, w, q, rw.sum());
    sol.theta = sol.coef.cwiseQuotient(sp.basis_scale);
    return sol;
}

QuadSolution solve_add(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U,
                       const PathFunctional& F, const PathFunctional& G) {
    const Eigen::VectorXd w = weight_A(pair, U);
    const double x = pair.x;
    // E_r[A(m+xF)^2 - 2xFm - x^2(F^2+G)]
    const Eigen::VectorXd q =
        x * (sp.basis.transpose() * (sp.r.cwiseProduct((w.array() - 1.0).matrix())
                                         .cwiseProduct(F)));
    const double c0 =
        x * x * sp.r.dot((w.cwiseProduct(F.cwiseProduct(F)) - F.cwiseProduct(F) - G));
    QuadSolution sol = run_quadratic(sp.r, sp.basis, w, q, c0);
    sol.theta = sol.coef.cwiseQuotient(sp.basis_scale);
    return sol;
}

QuadSolution solve_byy(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U) {
    const Eigen::VectorXd w = weight_B(pair, U);
    const Eigen::VectorXd rw = sp.r.cwiseProduct(w);
    const Eigen::VectorXd q = sp.nbasis.transpose() * rw;
    return run_quadratic(sp.r, sp.nbasis, w, q, rw.sum());
}

QuadSolution solve_bdd(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U,
                       const PathFunctional& F, const PathFunctional& G) {
    const Eigen::VectorXd w = weight_B(pair, U);
    const double y = pair.y;
    // E_r[B(n-yF)^2 + 2yFn - y^2(F^2-G)]
    const Eigen::VectorXd q =
        -y * (sp.nbasis.transpose() * (sp.r.cwiseProduct((w.array() - 1.0).matrix())
                                           .cwiseProduct(F)));
    const double c0 =
        y * y * sp.r.dot((w.cwiseProduct(F.cwiseProduct(F)) - F.cwiseProduct(F) + G));
    return run_quadratic(sp.r, sp.nbasis, w, q, c0);
}

double compute_axd(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U,
                   const PathFunctional& m0, const PathFunctional& m1,
                   const PathFunctional& F) {
    const Eigen::VectorXd A = weight_A(pair, U);
    double s = 0.0;
    for (int l = 0; l < sp.r.size(); ++l) {
        const double xf = pair.x * F[l];
        s += sp.r[l] * ((A[l] * (xf + m1[l]) - xf) * (1.0 + m0[l]));
    }
    return s;
}

double compute_byd(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U,
                   const PathFunctional& n0, const PathFunctional& n1,
                   const PathFunctional& F) {
    const Eigen::VectorXd B = weight_B(pair, U);
    double s = 0.0;
    for (int l = 0; l < sp.r.size(); ++l) {
        const double yf = pair.y * F[l];
        s += sp.r[l] * ((B[l] * (n1[l] - yf) + yf) * (1.0 + n0[l]));
    }
    return s;
}

double first_order(const OptimalPair& pair, const PathFunctional& F) {
    return pair.x * pair.y * pair.r_weights.dot(F);
}

SensitivityReport analyze(const TreeMarket& m, const OptimalPair& pair, const Utility& U,
                          const AttainableSpace& sp) {
    SensitivityReport rep;
    rep.x = pair.x;
    rep.y = pair.y;
    rep.u0 = pair.u0;
    rep.v0 = pair.v0;
    auto [F, G] = m.compute_F_G();
    rep.F = F;
    rep.G = G;
    rep.u_delta = first_order(pair, F);

    QuadSolution axx = solve_axx(pair, sp, U);
    QuadSolution add = solve_add(pair, sp, U, F, G);
    QuadSolution byy = solve_byy(pair, sp, U);
    QuadSolution bdd = solve_bdd(pair, sp, U, F, G);
    rep.axx = axx.value;
    rep.add = add.value;
    rep.byy = byy.value;
    rep.bdd = bdd.value;
    rep.m0 = axx.functional;
    rep.m1 = add.functional;
    rep.n0 = byy.functional;
    rep.n1 = bdd.functional;
    rep.m0_theta = axx.theta;
    rep.m1_theta = add.theta;
    rep.axd = compute_axd(pair, sp, U, rep.m0, rep.m1, F);
    rep.byd = compute_byd(pair, sp, U, rep.n0, rep.n1, F);

    const double yx = pair.y / pair.x, xy = pair.x / pair.y;
    rep.Hu << -yx * rep.axx, -yx * rep.axd, -yx * rep.axd, -yx * rep.add;
    rep.Hv << xy * rep.byy, xy * rep.byd, xy * rep.byd, xy * rep.bdd;
    return rep;
}

std::vector<double> attainable_process(const TreeMarket& m, const OptimalPair& pair,
                                       const AttainableSpace& sp,
                                       const Eigen::VectorXd& theta) {
    // Zero-capital 0-market portfolio with amounts theta, discounted by xhat/x.
    std::vector<double> W(m.nodes.size(), 0.0);
    std::vector<double> amounts(m.nodes.size(), 0.0);
    for (int j = 0; j < theta.size(); ++j) amounts[sp.basis_node[j]] = theta[j];
    for (const auto& layer : m.levels)
        for (int id : layer) {
            const TreeNode& n = m.nodes[id];
            for (std::size_t s = 0; s < n.children.size(); ++s)
                W[n.children[s]] = W[id] + amounts[id] * m.dS0(id, static_cast<int>(s));
        }
    std::vector<double> out(m.nodes.size(), 0.0);
    for (std::size_t id = 0; id < m.nodes.size(); ++id)
        out[id] = pair.x * W[id] / pair.base_wealth_node[id];
    return out;
}

std::vector<double> r_martingale_process(const TreeMarket& m, const OptimalPair& pair,
                                         const PathFunctional& terminal) {
    // E^R[f | n] = E[xhat yhat f | n] / E[xhat yhat | n], via P-backward sums.
    std::vector<double> num(m.nodes.size(), 0.0), den(m.nodes.size(), 0.0);
    for (int l = 0; l < m.n_leaves(); ++l) {
        const double zy = pair.xhat_T[l] * pair.yhat_T[l];
        num[m.leaves[l]] = zy * terminal[l];
        den[m.leaves[l]] = zy;
    }
    for (auto it = m.levels.rbegin(); it != m.levels.rend(); ++it)
        for (int id : *it) {
            const TreeNode& n = m.nodes[id];
            if (n.children.empty()) continue;
            for (std::size_t c = 0; c < n.children.size(); ++c) {
                num[id] += n.prob[c] * num[n.children[c]];
                den[id] += n.prob[c] * den[n.children[c]];
            }
        }
    std::vector<double> out(m.nodes.size(), 0.0);
    for (std::size_t id = 0; id < m.nodes.size(); ++id) out[id] = num[id] / den[id];
    return out;
}

IdentityReport verify_identities(const TreeMarket& m, const OptimalPair& pair,
                                 const Utility& U, const AttainableSpace& sp,
                                 const SensitivityReport& rep) {
    IdentityReport out;
    const double x = pair.x, y = pair.y;

    Eigen::Matrix2d left, right;
    left << rep.axx, 0.0, rep.axd, -x / y;
    right << rep.byy, 0.0, rep.byd, -y / x;
    out.matrix_identity = (left * right - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff();

    out.gap_identity =
        std::abs(y / x * rep.add + x / y * rep.bdd - rep.axd * rep.byd);

    // Leafwise two-row relations between primal and dual minimizers.
    for (int l = 0; l < m.n_leaves(); ++l) {
        const double xh = pair.xhat_T[l], yh = pair.yhat_T[l];
        const double upp = U.d2u(xh), vpp = U.d2v(yh);
        const double xf = x * rep.F[l], yf = y * rep.F[l];
        const double p1 = upp * xh * (1.0 + rep.m0[l]) + rep.axx * yh * (1.0 + rep.n0[l]);
        const double p2 = upp * xh * (rep.m1[l] + xf) + rep.axd * yh * (1.0 + rep.n0[l]) -
                          (x / y) * yh * (rep.n1[l] - yf);
        out.pointwise_primal =
            std::max(out.pointwise_primal, std::max(std::abs(p1), std::abs(p2)) / y);
        const double d1 = vpp * yh * (1.0 + rep.n0[l]) - rep.byy * xh * (1.0 + rep.m0[l]);
        const double d2 = vpp * yh * (rep.n1[l] - yf) - rep.byd * xh * (1.0 + rep.m0[l]) +
                          (y / x) * xh * (rep.m1[l] + xf);
        out.pointwise_dual =
            std::max(out.pointwise_dual, std::max(std::abs(d1), std::abs(d2)) / x);
    }

    // Nine product-martingale checks under P.
    const std::vector<double> m0p = attainable_process(m, pair, sp, rep.m0_theta);
    const std::vector<double> m1p = attainable_process(m, pair, sp, rep.m1_theta);
    const std::vector<double> n0p = r_martingale_process(m, pair, rep.n0);
    const std::vector<double> n1p = r_martingale_process(m, pair, rep.n1);
    for (int a = 0; a < 3; ++a)
        for (int bidx = 0; bidx < 3; ++bidx) {
            double worst = 0.0;
            for (int id : m.internal) {
                const TreeNode& n = m.nodes[id];
                auto prodval = [&](int nid) {
                    double av = pair.wealth_node[nid];
                    if (a == 1) av *= m0p[nid];
                    if (a == 2) av *= m1p[nid];
                    double bv = pair.deflator_node[nid];
                    if (bidx == 1) bv *= n0p[nid];
                    if (bidx == 2) bv *= n1p[nid];
                    return av * bv;
                };
                double e = 0.0;
                for (std::size_t c = 0; c < n.children.size(); ++c)
                    e += n.prob[c] * prodval(n.children[c]);
                const double here = prodval(id);
                worst = std::max(worst, std::abs(e - here) / std::max(1.0, std::abs(here)));
            }
            out.martingale[a][bidx] = worst;
            out.max_martingale = std::max(out.max_martingale, worst);
        }

    if (sp.dim() > 0 && sp.codim() > 0) {
        Eigen::MatrixXd cross =
            sp.basis.transpose() * sp.r.asDiagonal() * sp.nbasis;
        out.orthogonality = cross.cwiseAbs().maxCoeff();
    }
    out.decomposition_ok =
        std::abs(static_cast<double>(sp.dim() + sp.codim() + 1 - m.n_leaves()));
    return out;
}

double predict_u(const SensitivityReport& rep, double dx, double delta) {
    Eigen::Vector2d h(dx, delta);
    return rep.u0 + dx * rep.y + delta * rep.u_delta + 0.5 * h.dot(rep.Hu * h);
}

double predict_v(const SensitivityReport& rep, double dy, double delta) {
    Eigen::Vector2d h(dy, delta);
    return rep.v0 - dy * rep.x + delta * rep.u_delta + 0.5 * h.dot(rep.Hv * h);
}

OptimizerPrediction predict_optimizer_primal(const OptimalPair& pair,
                                             const SensitivityReport& rep, double dx,
                                             double delta, const PathFunctional& ldelta) {
    OptimizerPrediction out;
    const int L = pair.xhat_T.size();
    out.multiplicative.resize(L);
    out.additive.resize(L);
    for (int l = 0; l < L; ++l) {
        const double base = pair.xhat_T[l] / pair.x;
        out.multiplicative[l] =
            base * (pair.x + dx * (1.0 + rep.m0[l]) + delta * rep.m1[l]) / ldelta[l];
        const double xprime = base * (1.0 + rep.m0[l]);
        const double xd = base * (rep.m1[l] + pair.x * rep.F[l]);
        out.additive[l] = pair.xhat_T[l] + dx * xprime + delta * xd;
    }
    return out;
}

OptimizerPrediction predict_optimizer_dual(const OptimalPair& pair,
                                           const SensitivityReport& rep, double dy,
                                           double delta, const PathFunctional& ldelta) {
    OptimizerPrediction out;
    const int L = pair.yhat_T.size();
    out.multiplicative.resize(L);
    out.additive.resize(L);
    for (int l = 0; l < L; ++l) {
        const double base = pair.yhat_T[l] / pair.y;
        out.multiplicative[l] =
            base * (pair.y + dy * (1.0 + rep.n0[l]) + delta * rep.n1[l]) * ldelta[l];
        const double yprime = base * (1.0 + rep.n0[l]);
        const double yd = base * (rep.n1[l] - pair.y * rep.F[l]);
        out.additive[l] = pair.yhat_T[l] + dy * yprime + delta * yd;
    }
    return out;
}

std::vector<std::pair<double, double>> integrability_probe(const TreeMarket& m,
                                                           const OptimalPair& pair,
                                                           const std::vector<double>& c_grid) {
    std::vector<std::pair<double, double>> out;
    for (double c : c_grid) {
        const PathFunctional z = m.zeta(c, 0.0);
        out.emplace_back(c, pair.r_weights.dot(z));
    }
    return out;
}

}  // namespace mprs
