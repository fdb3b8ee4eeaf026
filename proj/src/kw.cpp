#include "mprs/kw.hpp"

#include <cmath>

namespace mprs {

namespace {

// r-weighted projection coefficients of f onto the columns of B.
Eigen::VectorXd project(const Eigen::VectorXd& r, const Eigen::MatrixXd& B,
                        const Eigen::VectorXd& f) {
    if (B.cols() == 0) return Eigen::VectorXd();
    const Eigen::MatrixXd G = B.transpose() * r.asDiagonal() * B;
    const Eigen::VectorXd rhs = B.transpose() * r.cwiseProduct(f);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    return ldlt.solve(rhs);
}

}  // namespace

KWDecomposition kw_decompose(const OptimalPair& pair, const TreeMarket& m, const Utility& U,
                             const AttainableSpace& sp, const PathFunctional& F,
                             const PathFunctional& G) {
    if (!pair.rt_exists) throw RiskToleranceMissing();
    KWDecomposition kw;
    const int L = m.n_leaves();
    kw.r0 = pair.r0;
    kw.rtilde = pair.rtilde_weights;

    kw.p_T.resize(L);
    for (int l = 0; l < L; ++l)
        kw.p_T[l] = (U.A(pair.xhat_T[l]) - 1.0) * pair.x * F[l];

    // Transport the hedgeable basis: M in M^2 iff M xhat/R in M~^2.
    Eigen::MatrixXd tbasis(L, sp.dim());
    for (int j = 0; j < sp.dim(); ++j)
        for (int l = 0; l < L; ++l)
            tbasis(l, j) =
                sp.basis(l, j) * pair.xhat_T[l] / pair.rt_node[m.leaves[l]];

    kw.p0 = kw.rtilde.dot(kw.p_T);
    const Eigen::VectorXd mcoef = project(kw.rtilde, tbasis, kw.p_T);
    kw.m_tilde_T = (sp.dim() > 0) ? PathFunctional(-(tbasis * mcoef))
                                  : PathFunctional(PathFunctional::Zero(L));
    const Eigen::VectorXd ncoef = project(kw.rtilde, sp.nbasis, kw.p_T);
    kw.n_tilde_T = (sp.codim() > 0) ? PathFunctional(-(sp.nbasis * ncoef))
                                    : PathFunctional(PathFunctional::Zero(L));

    kw.recon_residual = 0.0;
    for (int l = 0; l < L; ++l)
        kw.recon_residual = std::max(
            kw.recon_residual,
            std::abs(kw.p_T[l] - kw.p0 + kw.m_tilde_T[l] + kw.n_tilde_T[l]));
    kw.ortho_residual = std::abs(kw.rtilde.dot(kw.m_tilde_T.cwiseProduct(kw.n_tilde_T)));

    // C_a and C_b are plain R(x,0) expectations.
    double ca = 0.0, cb = 0.0;
    for (int l = 0; l < L; ++l) {
        const double A = U.A(pair.xhat_T[l]);
        const double f2 = F[l] * F[l];
        ca += pair.r_weights[l] * (f2 * (A - 1.0) / A - G[l]);
        cb += pair.r_weights[l] * (G[l] + f2 * (1.0 - A));
    }
    kw.c_a = pair.x * pair.x * ca;
    kw.c_b = pair.y * pair.y * cb;
    return kw;
}

std::pair<PathFunctional, PathFunctional> recover_m1_n1(const KWDecomposition& kw,
                                                        const OptimalPair& pair,
                                                        const TreeMarket& m) {
    const int L = kw.p_T.size();
    PathFunctional m1(L), n1(L);
    for (int l = 0; l < L; ++l) {
        m1[l] = kw.m_tilde_T[l] * pair.rt_node[m.leaves[l]] / pair.xhat_T[l];
        n1[l] = kw.n_tilde_T[l] * pair.y / pair.x;
    }
    return {m1, n1};
}

KWHessian hessian_from_kw(const KWDecomposition& kw, const OptimalPair& pair, double axx) {
    KWHessian h;
    const double x = pair.x, y = pair.y, r0x = kw.r0 / pair.x;
    const double en2 = kw.rtilde.dot(kw.n_tilde_T.cwiseProduct(kw.n_tilde_T));
    const double em2 = kw.rtilde.dot(kw.m_tilde_T.cwiseProduct(kw.m_tilde_T));
    h.add = r0x * en2 + r0x * kw.p0 * kw.p0 + kw.c_a;
    h.bdd = r0x * (y / x) * (y / x) * (em2 + kw.p0 * kw.p0) + kw.c_b;
    h.axd = kw.p0;
    h.byd = (y / x) * kw.p0 / axx;
    return h;
}

}  // namespace mprs
