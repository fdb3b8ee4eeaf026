#pragma once

#include "mprs/sensitivity.hpp"

namespace mprs {

/// Second-order corrected strategy: base proportion pi_hat plus correction
/// integrands gamma0, gamma1 against M^R, truncated at the stopping times
/// sigma_eps / tau_eps (level x/eps on |M^i| and <M^i>).
struct CorrectedStrategy {
    double dx = 0.0, delta = 0.0, eps = 0.0;
    std::vector<double> pi_hat;         // per node id
    std::vector<double> gamma0, gamma1; // per node id, untruncated integrands
    std::vector<char> active0, active1; // truncation flags per node id
};

/// Per-edge increment of the tree M^R: dS0/(1 + pi_hat dS0); reproduces
/// M^i(x,0)/x exactly when integrated against gamma^i.
double mr_increment(const TreeMarket& m, const OptimalPair& pair, int node, int slot);

/// Integrands with gamma^i . M^R = M^i(x,0)/x from the minimizers' per-node
/// amounts. Throws DegenerateIncrement when a flat node carries a move.
std::pair<std::vector<double>, std::vector<double>> derive_gammas(
    const OptimalPair& pair, const SensitivityReport& rep, const AttainableSpace& sp,
    const TreeMarket& m);

/// Max leafwise |sum_path gamma dM^R - target/x|.
double gamma_reconstruction_residual(const TreeMarket& m, const OptimalPair& pair,
                                     const std::vector<double>& gamma,
                                     const PathFunctional& target_over_x);

/// eps = (dx^2 + delta^2)^{1/4} clamped to [eps_min, eps_max].
double select_epsilon(double dx, double delta, double eps_min = 1e-3, double eps_max = 1.0);

CorrectedStrategy make_corrected(const OptimalPair& pair, const SensitivityReport& rep,
                                 const AttainableSpace& sp, const TreeMarket& m, double dx,
                                 double delta);
CorrectedStrategy make_corrected_eps(const OptimalPair& pair, const SensitivityReport& rep,
                                     const AttainableSpace& sp, const TreeMarket& m,
                                     double dx, double delta, double eps);

/// Terminal wealth (x+dx) E((pi_hat + dx g0 + delta(nu + g1)) . S^delta):
/// on the tree, (x+dx) Pi(1 + phi dS0) / L^delta with phi = pi_hat + dx g0 +
/// delta g1. Throws PositivityViolation when a factor is non-positive.
PathFunctional corrected_wealth(const CorrectedStrategy& cs, const TreeMarket& m,
                                const OptimalPair& pair);

/// True when eps is loose enough that no stopping time triggers on the tree.
bool truncation_inactive(const CorrectedStrategy& cs);

}  // namespace mprs
