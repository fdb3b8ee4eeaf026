#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mprs/solver.hpp"
#include "mprs/tree.hpp"
#include "mprs/utility.hpp"

namespace mprs {

/// Hedgeable subspace M^2(x,0) under the numeraire xhat/x and measure R(x,0),
/// plus its orthogonal complement N^2(y,0) within zero-mean leaf functionals.
/// One generator per tradable node: terminal value of a unit bet at that node
/// discounted by the optimal wealth, b_l = x dS0(n -> child_l)/xhat_l.
struct AttainableSpace {
    Eigen::VectorXd r;           // R(x,0) leaf weights
    Eigen::MatrixXd basis;       // leaves x K, columns normalized to E_r[b^2]=1
    std::vector<int> basis_node; // tradable node id per column
    Eigen::VectorXd basis_scale; // normalized = raw / scale
    Eigen::MatrixXd gram;        // E_r[b_i b_j]
    Eigen::MatrixXd nbasis;      // leaves x Kn, r-orthonormal complement
    double max_basis_mean = 0.0; // worst |E_r[b_i]| (zero up to FOC residual)

    int dim() const { return static_cast<int>(basis.cols()); }
    int codim() const { return static_cast<int>(nbasis.cols()); }
};

AttainableSpace build_attainable_space(const OptimalPair& pair, const TreeMarket& m);

/// Minimizer of one auxiliary quadratic problem. `theta` are raw per-node
/// amounts (aligned with basis_node) when the problem runs over M^2.
struct QuadSolution {
    double value = 0.0;
    PathFunctional functional;  // terminal value of the minimizer
    Eigen::VectorXd coef;       // coefficients on the (normalized) basis
    Eigen::VectorXd theta;      // raw amounts; empty for N^2 problems
};

QuadSolution solve_axx(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U);
QuadSolution solve_add(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U,
                       const PathFunctional& F, const PathFunctional& G);
QuadSolution solve_byy(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U);
QuadSolution solve_bdd(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U,
                       const PathFunctional& F, const PathFunctional& G);

double compute_axd(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U,
                   const PathFunctional& m0, const PathFunctional& m1,
                   const PathFunctional& F);
double compute_byd(const OptimalPair& pair, const AttainableSpace& sp, const Utility& U,
                   const PathFunctional& n0, const PathFunctional& n1,
                   const PathFunctional& F);

/// u_delta(x,0) = v_delta(y,0) = x y E^R[F].
double first_order(const OptimalPair& pair, const PathFunctional& F);

struct SensitivityReport {
    double x = 0, y = 0, u0 = 0, v0 = 0;
    double u_delta = 0;  // = v_delta
    double axx = 0, axd = 0, add = 0;
    double byy = 0, byd = 0, bdd = 0;
    Eigen::Matrix2d Hu, Hv;
    PathFunctional m0, m1, n0, n1;
    Eigen::VectorXd m0_theta, m1_theta;  // raw amounts per basis column
    PathFunctional F, G;
};

/// Full first- and second-order analysis of the unperturbed pair.
SensitivityReport analyze(const TreeMarket& m, const OptimalPair& pair, const Utility& U,
                          const AttainableSpace& sp);

struct IdentityReport {
    double matrix_identity = 0;     // eq: inverse-pair block product vs I2
    double gap_identity = 0;        // (y/x)add + (x/y)bdd - axd byd
    double pointwise_primal = 0;    // leafwise two-row primal relation
    double pointwise_dual = 0;      // leafwise dual counterpart
    double martingale[3][3] = {};   // {X,XM0,XM1} x {Y,YN0,YN1} per-node defect
    double max_martingale = 0;
    double orthogonality = 0;       // max |E_r[m n]| over basis pairs
    double decomposition_ok = 0;    // rank defect of M + N + 1 vs all leaf funcs
};

IdentityReport verify_identities(const TreeMarket& m, const OptimalPair& pair,
                                 const Utility& U, const AttainableSpace& sp,
                                 const SensitivityReport& rep);

/// Second-order predictions of u(x+dx, delta), v(y+dy, delta).
double predict_u(const SensitivityReport& rep, double dx, double delta);
double predict_v(const SensitivityReport& rep, double dy, double delta);

struct OptimizerPrediction {
    PathFunctional multiplicative;  // (xhat/x)(x + dx(1+M0) + delta M1)/L^delta
    PathFunctional additive;        // xhat + dx X' + delta X^d
};

OptimizerPrediction predict_optimizer_primal(const OptimalPair& pair,
                                             const SensitivityReport& rep, double dx,
                                             double delta, const PathFunctional& ldelta);
OptimizerPrediction predict_optimizer_dual(const OptimalPair& pair,
                                           const SensitivityReport& rep, double dy,
                                           double delta, const PathFunctional& ldelta);

/// E^R[zeta(c, 0)] per c; always finite on trees.
std::vector<std::pair<double, double>> integrability_probe(const TreeMarket& m,
                                                           const OptimalPair& pair,
                                                           const std::vector<double>& c_grid);

/// M0/M1 as processes (value per node id) from their amount coefficients.
std::vector<double> attainable_process(const TreeMarket& m, const OptimalPair& pair,
                                       const AttainableSpace& sp,
                                       const Eigen::VectorXd& theta);

/// Conditional-expectation process of a terminal functional under R(x,0).
std::vector<double> r_martingale_process(const TreeMarket& m, const OptimalPair& pair,
                                         const PathFunctional& terminal);

}  // namespace mprs
