#include "mprs/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace mprs {

namespace {

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

int TreeMarket::slot_on_path(int id, int leaf_pos) const {
    const TreeNode& n = nodes[id];
    const int leaf_id = leaves[leaf_pos];
    for (std::size_t s = 0; s < n.children.size(); ++s) {
        const TreeNode& c = nodes[n.children[s]];
        if (leaf_pos >= c.leaf_lo && leaf_pos < c.leaf_hi) return static_cast<int>(s);
    }
    throw std::logic_error("leaf " + std::to_string(leaf_id) + " not below node " +
                           std::to_string(id));
}

void TreeMarket::finalize() {
    levels.clear();
    leaves.clear();
    internal.clear();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        if (static_cast<std::size_t>(n.level) >= levels.size()) levels.resize(n.level + 1);
        levels[n.level].push_back(static_cast<int>(i));
        if (n.children.empty())
            leaves.push_back(static_cast<int>(i));
        else
            internal.push_back(static_cast<int>(i));
    }
    // Leaves were appended in path-lexicographic order (level-by-level
    // construction preserves it), so each subtree covers a contiguous range.
    path_prob.assign(leaves.size(), 0.0);
    paths_.assign(leaves.size(), {});
    for (auto& n : nodes) { n.leaf_lo = -1; n.leaf_hi = -1; }
    for (int lp = 0; lp < n_leaves(); ++lp) {
        double p = 1.0;
        std::vector<int> chain;
        int id = leaves[lp];
        nodes[id].leaf_lo = lp;
        nodes[id].leaf_hi = lp + 1;
        while (nodes[id].parent >= 0) {
            const int par = nodes[id].parent;
            p *= nodes[par].prob[nodes[id].slot_in_parent];
            chain.push_back(par);
            if (nodes[par].leaf_lo < 0) nodes[par].leaf_lo = lp;
            nodes[par].leaf_hi = lp + 1;
            id = par;
        }
        std::reverse(chain.begin(), chain.end());
        paths_[lp] = std::move(chain);
        path_prob[lp] = p;
    }
}

void TreeMarket::validate(double tol) const {
    if (nodes.empty()) throw std::invalid_argument("empty tree");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        if (n.children.empty()) continue;
        if (n.children.size() != n.prob.size() || n.children.size() != n.dM.size())
            throw std::invalid_argument("node " + std::to_string(i) +
                                        ": children/prob/dM size mismatch");
        if (!std::isfinite(n.qv) || !std::isfinite(n.lambda) || !std::isfinite(n.nu) ||
            !all_finite(n.prob) || !all_finite(n.dM))
            throw std::invalid_argument("node " + std::to_string(i) + ": non-finite data");
        double psum = 0.0, mart = 0.0, qv = 0.0;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t s = 0; s < n.children.size(); ++s) {
            if (n.prob[s] <= 0.0)
                throw std::invalid_argument("node " + std::to_string(i) +
                                            ": non-positive probability");
            psum += n.prob[s];
            mart += n.prob[s] * n.dM[s];
            qv += n.prob[s] * n.dM[s] * n.dM[s];
            const double r = dS0(static_cast<int>(i), static_cast<int>(s));
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        const double scale = std::max(1.0, std::abs(n.qv));
        if (std::abs(psum - 1.0) > tol)
            throw std::invalid_argument("node " + std::to_string(i) +
                                        ": probabilities sum to " + std::to_string(psum));
        if (std::abs(mart) > tol * std::max(1.0, qv))
            throw std::invalid_argument("node " + std::to_string(i) +
                                        ": martingale increment mean " + std::to_string(mart));
        if (std::abs(qv - n.qv) > tol * scale)
            throw std::invalid_argument("node " + std::to_string(i) + ": qv mismatch " +
                                        std::to_string(qv) + " vs " + std::to_string(n.qv));
        const bool flat = (hi == 0.0 && lo == 0.0);
        if (!flat && !(lo < 0.0 && hi > 0.0))
            throw std::invalid_argument("node " + std::to_string(i) +
                                        ": single-signed returns (arbitrage-like tree)");
    }
}

namespace {

struct LayerBuilder {
    TreeMarket m;
    std::size_t cap;

    explicit LayerBuilder(std::size_t node_cap) : cap(node_cap) {}

    int add(int parent, double state, int level) {
        if (m.nodes.size() >= cap)
            throw std::invalid_argument("tree exceeds node cap of " + std::to_string(cap));
        TreeNode n;
        n.parent = parent;
        n.level = level;
        n.state = state;
        if (parent >= 0) {
            n.slot_in_parent = static_cast<int>(m.nodes[parent].children.size());
            m.nodes[parent].children.push_back(static_cast<int>(m.nodes.size()));
        }
        m.nodes.push_back(std::move(n));
        return static_cast<int>(m.nodes.size() - 1);
    }
};

TreeMarket build_uniform(int steps, double dt, double sigma, const NodeFn& lambda_spec,
                         const NodeFn& nu_spec, const std::vector<double>& dM,
                         const std::vector<double>& prob, std::size_t node_cap) {
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    if (sigma <= 0.0) throw std::invalid_argument("sigma must be positive");

    LayerBuilder b(node_cap);
    b.add(-1, 0.0, 0);
    std::vector<int> frontier = {0};
    for (int k = 0; k < steps; ++k) {
        std::vector<int> next;
        next.reserve(frontier.size() * dM.size());
        for (int id : frontier) {
            TreeNode& n = b.m.nodes[id];
            n.qv = sigma * sigma * dt;
            n.lambda = lambda_spec(k, n.state);
            n.nu = nu_spec(k, n.state);
            n.prob = prob;
            n.dM = dM;
            const double state = n.state;
            for (double inc : dM) next.push_back(b.add(id, state + inc, k + 1));
        }
        frontier = std::move(next);
    }
    b.m.horizon = steps * dt;
    b.m.dt = dt;
    TreeMarket m = std::move(b.m);
    m.finalize();
    m.validate();
    return m;
}

}  // namespace

TreeMarket TreeMarket::binomial(int steps, double dt, double sigma, const NodeFn& lambda_spec,
                                const NodeFn& nu_spec, std::size_t node_cap) {
    const double s = sigma * std::sqrt(dt);
    return build_uniform(steps, dt, sigma, lambda_spec, nu_spec, {+s, -s}, {0.5, 0.5},
                         node_cap);
}

TreeMarket TreeMarket::trinomial(int steps, double dt, double sigma, const NodeFn& lambda_spec,
                                 const NodeFn& nu_spec, std::size_t node_cap) {
    const double s = sigma * std::sqrt(3.0 * dt);
    return build_uniform(steps, dt, sigma, lambda_spec, nu_spec, {+s, 0.0, -s},
                         {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}, node_cap);
}

std::pair<PathFunctional, PathFunctional> TreeMarket::compute_F_G() const {
    PathFunctional F(n_leaves()), G(n_leaves());
    for (int lp = 0; lp < n_leaves(); ++lp) {
        double f = 0.0, g = 0.0;
        for (int id : paths_[lp]) {
            const TreeNode& n = nodes[id];
            const int s = slot_on_path(id, lp);
            f += n.nu * dS0(id, s);
            g += n.nu * n.nu * n.qv;
        }
        F[lp] = f;
        G[lp] = g;
    }
    return {F, G};
}

std::vector<std::vector<double>> TreeMarket::perturbed_returns(double delta) const {
    std::vector<std::vector<double>> out(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        out[i].resize(n.children.size());
        for (std::size_t s = 0; s < n.children.size(); ++s)
            out[i][s] = (n.lambda + delta * n.nu) * n.qv + n.dM[s];
    }
    return out;
}

std::vector<std::vector<double>> TreeMarket::wealth_returns(double delta) const {
    std::vector<std::vector<double>> out(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        out[i].resize(n.children.size());
        for (std::size_t s = 0; s < n.children.size(); ++s) {
            const double r = dS0(static_cast<int>(i), static_cast<int>(s));
            const double factor = 1.0 - delta * n.nu * r;
            if (factor <= 0.0) throw NonPositiveExponential(static_cast<int>(i), factor);
            out[i][s] = r / factor;
        }
    }
    return out;
}

PathFunctional TreeMarket::l_delta(double delta) const {
    PathFunctional out(n_leaves());
    for (int lp = 0; lp < n_leaves(); ++lp) {
        double prod = 1.0;
        for (int id : paths_[lp]) {
            const TreeNode& n = nodes[id];
            const int s = slot_on_path(id, lp);
            const double factor = 1.0 - delta * n.nu * dS0(id, s);
            if (factor <= 0.0) throw NonPositiveExponential(id, factor);
            prod *= factor;
        }
        out[lp] = prod;
    }
    return out;
}

PathFunctional TreeMarket::l_delta_exp(double delta) const {
    auto [F, G] = compute_F_G();
    PathFunctional out(n_leaves());
    for (int lp = 0; lp < n_leaves(); ++lp)
        out[lp] = std::exp(-(delta * F[lp] + 0.5 * delta * delta * G[lp]));
    return out;
}

PathFunctional TreeMarket::zeta(double c, double delta) const {
    if (c < 0.0) throw std::invalid_argument("zeta requires c >= 0");
    auto [F, G] = compute_F_G();
    PathFunctional out(n_leaves());
    for (int lp = 0; lp < n_leaves(); ++lp)
        out[lp] = std::exp(c * (std::abs(F[lp] + delta * G[lp]) + G[lp]));
    return out;
}

double TreeMarket::positivity_radius() const {
    double radius = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        for (std::size_t s = 0; s < n.children.size(); ++s) {
            const double v = std::abs(n.nu * dS0(static_cast<int>(i), static_cast<int>(s)));
            if (v > 0.0) radius = std::min(radius, 1.0 / v);
        }
    }
    return radius;
}

// JSON layout: {"horizon": T, "dt": dt, "layers": [[{"state":, "qv":, "lambda":,
// "nu":, "children": [{"prob":, "dM":}, ...]}, ...], ...]}. Children connect a
// layer-k node to consecutive nodes of layer k+1 in declaration order.
std::string TreeMarket::to_json() const {
    nlohmann::json j;
    j["horizon"] = horizon;
    j["dt"] = dt;
    nlohmann::json jlayers = nlohmann::json::array();
    for (const auto& layer : levels) {
        nlohmann::json jl = nlohmann::json::array();
        for (int id : layer) {
            const TreeNode& n = nodes[id];
            nlohmann::json jn;
            jn["state"] = n.state;
            if (!n.children.empty()) {
                jn["qv"] = n.qv;
                jn["lambda"] = n.lambda;
                jn["nu"] = n.nu;
                nlohmann::json jc = nlohmann::json::array();
                for (std::size_t s = 0; s < n.children.size(); ++s)
                    jc.push_back({{"prob", n.prob[s]}, {"dM", n.dM[s]}});
                jn["children"] = jc;
            }
            jl.push_back(jn);
        }
        jlayers.push_back(jl);
    }
    j["layers"] = jlayers;
    return j.dump(2);
}

TreeMarket TreeMarket::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    LayerBuilder b(kDefaultNodeCap);
    const auto& jlayers = j.at("layers");
    if (jlayers.empty()) throw std::invalid_argument("no layers");
    std::vector<int> prev;
    for (std::size_t k = 0; k < jlayers.size(); ++k) {
        const auto& jl = jlayers[k];
        std::vector<int> cur;
        if (k == 0) {
            if (jl.size() != 1)
                throw std::invalid_argument("layer 0 must hold the root only");
            cur.push_back(b.add(-1, jl[0].value("state", 0.0), 0));
        } else {
            // Layer-k nodes are the previous layer's children in declaration
            // order.
            std::size_t pos = 0;
            for (std::size_t pi = 0; pi < prev.size(); ++pi) {
                const auto& jp = jlayers[k - 1][pi];
                const std::size_t nc = jp.contains("children") ? jp["children"].size() : 0;
                for (std::size_t s = 0; s < nc; ++s) {
                    if (pos >= jl.size())
                        throw std::invalid_argument("layer " + std::to_string(k) +
                                                    " shorter than declared children");
                    cur.push_back(
                        b.add(prev[pi], jl[pos].value("state", 0.0), static_cast<int>(k)));
                    ++pos;
                }
            }
            if (pos != jl.size())
                throw std::invalid_argument("layer " + std::to_string(k) +
                                            " longer than declared children");
        }
        for (std::size_t i = 0; i < cur.size(); ++i) {
            const auto& jn = jl[i];
            TreeNode& n = b.m.nodes[cur[i]];
            if (jn.contains("children")) {
                n.qv = jn.at("qv").get<double>();
                n.lambda = jn.at("lambda").get<double>();
                n.nu = jn.at("nu").get<double>();
                for (const auto& jc : jn["children"]) {
                    n.prob.push_back(jc.at("prob").get<double>());
                    n.dM.push_back(jc.at("dM").get<double>());
                }
            }
        }
        prev = std::move(cur);
    }
    b.m.horizon = j.value("horizon", 0.0);
    b.m.dt = j.value("dt", 0.0);
    TreeMarket m = std::move(b.m);
    m.finalize();
    m.validate();
    return m;
}

}  // namespace mprs
