#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mprs/errors.hpp"

namespace mprs {

/// One scalar per leaf (terminal path) of a TreeMarket. Houses F, G, L^delta,
/// zeta, terminal optimizers and every other terminal functional.
using PathFunctional = Eigen::VectorXd;

/// Coefficient process evaluated at (time index, running state of M).
using NodeFn = std::function<double(int level, double state)>;

struct TreeNode {
    int parent = -1;
    int slot_in_parent = -1;  // which child of the parent this node is
    int level = 0;
    double state = 0.0;   // running value of M along the path
    double qv = 0.0;      // predictable <M> increment over the next step
    double lambda = 0.0;  // market price of risk at this node
    double nu = 0.0;      // perturbation direction at this node
    std::vector<int> children;
    std::vector<double> prob;  // conditional transition probabilities
    std::vector<double> dM;    // martingale increments per child
    int leaf_lo = -1, leaf_hi = -1;  // contiguous range of leaves below
};

/// Finite-state filtered market for the family S^delta = (lambda + delta nu)
/// . <M> + M. Nodes form a path tree (one parent each); paths are the
/// elementary events. Immutable after construction; all operations are pure.
class TreeMarket {
  public:
    std::vector<TreeNode> nodes;             // index 0 is the root
    std::vector<std::vector<int>> levels;    // node ids per time layer
    std::vector<int> leaves;                 // terminal node ids, path order
    std::vector<int> internal;               // non-terminal node ids
    std::vector<double> path_prob;           // unconditional P per leaf
    double horizon = 0.0;
    double dt = 0.0;

    static constexpr std::size_t kDefaultNodeCap = 1'000'000;

    int n_leaves() const { return static_cast<int>(leaves.size()); }
    int n_internal() const { return static_cast<int>(internal.size()); }
    bool is_leaf(int id) const { return nodes[id].children.empty(); }

    /// Unperturbed return increment along edge (node -> child slot).
    double dS0(int id, int slot) const {
        const TreeNode& n = nodes[id];
        return n.lambda * n.qv + n.dM[slot];
    }

    /// Edge slot taken at `id` by the path ending in leaf `leaf_pos`.
    int slot_on_path(int id, int leaf_pos) const;

    /// Ancestor chain (internal node ids, root first) of a leaf.
    const std::vector<int>& path_nodes(int leaf_pos) const { return paths_[leaf_pos]; }

    /// Asserts the market invariants: conditional probabilities positive and
    /// summing to one, sum p dM = 0, sum p dM^2 = qv, finite stored values,
    /// and no single-signed return node (arbitrage-like trees are rejected).
    void validate(double tol = 1e-12) const;

    // -- constructors -------------------------------------------------------

    static TreeMarket binomial(int steps, double dt, double sigma,
                               const NodeFn& lambda_spec, const NodeFn& nu_spec,
                               std::size_t node_cap = kDefaultNodeCap);

    /// Recombining-state trinomial with dM in {-sigma sqrt(3 dt), 0, +...}
    /// and probabilities {1/6, 2/3, 1/6}; incomplete (one risky asset).
    static TreeMarket trinomial(int steps, double dt, double sigma,
                                const NodeFn& lambda_spec, const NodeFn& nu_spec,
                                std::size_t node_cap = kDefaultNodeCap);

    /// Layer-by-layer explicit construction (documented JSON layout).
    static TreeMarket from_json(const std::string& text);
    std::string to_json() const;

    // -- perturbation functionals -------------------------------------------

    /// F = nu . S0_T and G = nu^2 . <M>_T per leaf; G >= 0 everywhere.
    std::pair<PathFunctional, PathFunctional> compute_F_G() const;

    /// Per-edge linear perturbed return (lambda + delta nu) qv + dM,
    /// aligned with nodes/children. Feeds zeta and diagnostics.
    std::vector<std::vector<double>> perturbed_returns(double delta) const;

    /// Per-edge delta-market wealth-growth return dS0/(1 - delta nu dS0):
    /// the exact increments for which X -> X/L^delta maps 0-market wealth
    /// onto delta-market wealth with proportion shift pi -> pi + delta nu.
    std::vector<std::vector<double>> wealth_returns(double delta) const;

    /// Leafwise discrete Doleans-Dade exponential Pi(1 - delta nu dS0) > 0.
    /// Throws NonPositiveExponential when delta exceeds the positivity radius.
    PathFunctional l_delta(double delta) const;

    /// Leafwise exp(-(delta F + delta^2 G / 2)): the multiplier defining the
    /// perturbed family C(x,delta) = C(x,0)/L^delta whose expansions the
    /// sensitivity formulas certify. Agrees with l_delta to O(delta^2 dt^{3/2})
    /// and is positive for every delta.
    PathFunctional l_delta_exp(double delta) const;

    /// Leafwise zeta(c, delta) = exp(c(|F + delta G| + G)) >= 1.
    PathFunctional zeta(double c, double delta) const;

    /// Largest delta magnitude keeping every Doleans-Dade edge factor
    /// positive (infinity when nu dS0 vanishes identically).
    double positivity_radius() const;

    /// Rebuilds leaves/levels/paths/leaf ranges; builders call this once the
    /// node graph is in place.
    void finalize();

  private:
    std::vector<std::vector<int>> paths_;  // internal-node chain per leaf
};

}  // namespace mprs
