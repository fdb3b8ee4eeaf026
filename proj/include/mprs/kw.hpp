#pragma once

#include "mprs/sensitivity.hpp"

namespace mprs {

/// Kunita-Watanabe decomposition of P_T = (A(xhat_T) - 1) x F under the
/// risk-tolerance numeraire R/R_0 and measure R~(x,0):
/// P = p0 - M~1 - N~1 with M~1 in the transported hedgeable space and N~1 in
/// its orthogonal complement.
struct KWDecomposition {
    double p0 = 0.0;
    double c_a = 0.0, c_b = 0.0;
    double r0 = 0.0;
    PathFunctional p_T;
    PathFunctional m_tilde_T, n_tilde_T;
    Eigen::VectorXd rtilde;
    double recon_residual = 0.0;  // max |P - p0 + M~1 + N~1|
    double ortho_residual = 0.0;  // |E^R~[M~1 N~1]|
};

/// Requires pair.rt_exists (throws RiskToleranceMissing otherwise).
KWDecomposition kw_decompose(const OptimalPair& pair, const TreeMarket& m, const Utility& U,
                             const AttainableSpace& sp, const PathFunctional& F,
                             const PathFunctional& G);

/// Reverts to the original numeraire: m1 = (R_T/xhat_T) M~1_T, n1 = (y/x) N~1_T.
std::pair<PathFunctional, PathFunctional> recover_m1_n1(const KWDecomposition& kw,
                                                        const OptimalPair& pair,
                                                        const TreeMarket& m);

struct KWHessian {
    double add = 0.0, bdd = 0.0, axd = 0.0, byd = 0.0;
};

/// Hessian coefficients from KW quantities alone (needs a(x,x) for b(y,d)).
KWHessian hessian_from_kw(const KWDecomposition& kw, const OptimalPair& pair, double axx);

}  // namespace mprs
