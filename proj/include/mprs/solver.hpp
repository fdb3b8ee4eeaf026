#pragma once

#include <limits>
#include <vector>

#include "mprs/tree.hpp"
#include "mprs/utility.hpp"

namespace mprs {

/// Solved primal/dual pair for the delta-model on a tree. For delta = 0 this
/// is the unperturbed OptimalPair; for delta != 0 wealth is the terminal of
/// X/L^delta with X ranging over 0-market wealth processes (the exact
/// discrete bijection), equivalently a delta-market wealth process with
/// per-edge returns dS0/(1 - delta nu dS0).
struct OptimalPair {
    double delta = 0.0;
    double x = 0.0;
    double y = 0.0;        // u_x(x, delta) = E[xhat yhat]/x
    double u0 = 0.0;       // E[U(xhat_T)]
    double v0 = 0.0;       // E[V(yhat_T)]
    double foc_residual = 0.0;  // max per-node relative first-order residual

    PathFunctional xhat_T;        // delta-market optimal terminal wealth
    PathFunctional yhat_T;        // U'(xhat_T)
    PathFunctional base_wealth_T; // 0-market wealth, xhat_T = base / L^delta
    PathFunctional ldelta;        // leafwise L^delta (ones at delta = 0)
    Eigen::VectorXd r_weights;    // P xhat yhat / (x y), sums to 1

    // Per node id (zero on leaves / non-tradable nodes):
    std::vector<double> amounts;     // optimal 0-market amount invested
    std::vector<double> pi_hat;      // delta-market optimal proportion
    std::vector<double> wealth_node; // delta-market wealth process
    std::vector<double> base_wealth_node;
    std::vector<double> deflator_node;  // E[U'(xhat_T)|n], delta = 0 only

    // Risk tolerance (filled by risk_tolerance(), delta = 0 only):
    bool rt_exists = false;
    double r0 = std::numeric_limits<double>::quiet_NaN();
    double rt_residual = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> rt_node;
    Eigen::VectorXd rtilde_weights;
};

/// Exact solution of sup E[U(X_T)] over X in X(x, delta) by damped Newton on
/// the concave program over per-node amounts. Certificate: per-node relative
/// FOC residual <= 1e-12. Throws NonConvergence / Unbounded.
OptimalPair solve_perturbed(const TreeMarket& m, const Utility& U, double x, double delta);

inline OptimalPair solve_unperturbed(const TreeMarket& m, const Utility& U, double x) {
    return solve_perturbed(m, U, x, 0.0);
}

struct RiskToleranceResult {
    bool exists = false;
    double r0 = std::numeric_limits<double>::quiet_NaN();
    double max_residual = 0.0;  // worst self-financing defect over nodes
};

/// Attempts replication of -U'(xhat_T)/U''(xhat_T) by pricing under the
/// node-wise deflator; exists iff self-financing within `tol` at every node.
/// Fills pair.rt_* and pair.rtilde_weights on success.
RiskToleranceResult risk_tolerance(OptimalPair& pair, const TreeMarket& m, const Utility& U,
                                   double tol = 1e-10);

/// Weights of R~(x,0) = R_T yhat_T / (R_0 y); requires risk tolerance.
PathFunctional measure_r_tilde(const OptimalPair& pair);

struct DualSolution {
    double value = 0.0;          // v(y, delta)
    PathFunctional yhat_T;       // dual optimizer terminal (delta-market)
    double kkt_residual = 0.0;
};

/// Independent convex solve of the dual inf E[V(Y_T L^delta)] over node-wise
/// deflators with initial value y (KKT Newton over leaf values).
DualSolution dual_solve(const TreeMarket& m, const Utility& U, double y, double delta);

struct DeflatorCheck {
    double max_orthogonality = 0.0;  // per-node |sum p yhat dS0| (normalized)
    double max_martingale = 0.0;     // per-node defect of xhat*yhat martingale
    double weight_sum_error = 0.0;   // |sum r_weights - 1|
};

/// Ex-post verification that yhat is a node-wise martingale deflator and that
/// xhat yhat is a P-martingale (delta = 0 pairs).
DeflatorCheck verify_deflator(const OptimalPair& pair, const TreeMarket& m);

}  // namespace mprs
