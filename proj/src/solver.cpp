#include "mprs/solver.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>

namespace mprs {

namespace {

// Nodes carrying a genuine trading decision (some nonzero return edge).
std::vector<int> tradable_nodes(const TreeMarket& m) {
    std::vector<int> vars;
    for (int id : m.internal) {
        const TreeNode& n = m.nodes[id];
        double mx = 0.0;
        for (std::size_t s = 0; s < n.children.size(); ++s)
            mx = std::max(mx, std::abs(m.dS0(id, static_cast<int>(s))));
        if (mx > 0.0) vars.push_back(id);
    }
    return vars;
}

// 0-market wealth at every node for amounts H (indexed by node id).
void forward_wealth(const TreeMarket& m, const std::vector<double>& H, double x,
                    std::vector<double>& W) {
    W.assign(m.nodes.size(), 0.0);
    W[0] = x;
    for (const auto& layer : m.levels)
        for (int id : layer) {
            const TreeNode& n = m.nodes[id];
            for (std::size_t s = 0; s < n.children.size(); ++s)
                W[n.children[s]] = W[id] + H[id] * m.dS0(id, static_cast<int>(s));
        }
}

}  // namespace

OptimalPair solve_perturbed(const TreeMarket& m, const Utility& U, double x, double delta) {
    if (!(x > 0.0)) throw std::invalid_argument("initial wealth must be positive");
    const int L = m.n_leaves();

    PathFunctional ld = (delta == 0.0) ? PathFunctional::Ones(L) : m.l_delta_exp(delta);
    PathFunctional D(L);  // leaf multiplier 1/L^delta
    for (int l = 0; l < L; ++l) D[l] = 1.0 / ld[l];

    const std::vector<int> vars = tradable_nodes(m);
    const int K = static_cast<int>(vars.size());
    std::vector<int> pos(m.nodes.size(), -1);
    for (int j = 0; j < K; ++j) pos[vars[j]] = j;

    // Myopic warm start: H_n = W_n lambda_n / A(W_n), scaled back where an
    // edge factor would drop below 0.2. The Newton iteration owns correctness;
    // this only shortens its path.
    const double mean_mult = D.mean();
    std::vector<double> H(m.nodes.size(), 0.0), W;
    W.assign(m.nodes.size(), 0.0);
    W[0] = x;
    for (const auto& layer : m.levels)
        for (int id : layer) {
            const TreeNode& n = m.nodes[id];
            if (n.children.empty()) continue;
            double pi = n.lambda / std::max(U.A(W[id] * mean_mult), 1e-3);
            double worst = 1.0;
            for (std::size_t s = 0; s < n.children.size(); ++s)
                worst = std::min(worst, 1.0 + pi * m.dS0(id, static_cast<int>(s)));
            if (worst < 0.2) pi *= 0.8 / (1.0 - worst);
            H[id] = (pos[id] >= 0) ? pi * W[id] : 0.0;
            for (std::size_t s = 0; s < n.children.size(); ++s)
                W[n.children[s]] = W[id] + H[id] * m.dS0(id, static_cast<int>(s));
        }
    forward_wealth(m, H, x, W);

    auto objective = [&](const std::vector<double>& Wc) {
        double f = 0.0;
        for (int l = 0; l < L; ++l) f += m.path_prob[l] * U.u(Wc[m.leaves[l]] * D[l]);
        return f;
    };
    double f = objective(W);

    Eigen::VectorXd grad(K), denom(K);
    Eigen::SparseMatrix<double> A(K, K);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    std::vector<Eigen::Triplet<double>> trip;
    bool analyzed = false;

    std::vector<double> dH(m.nodes.size(), 0.0), dW, Wtrial;
    double rel_foc = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < 300; ++iter) {
        grad.setZero();
        denom.setZero();
        trip.clear();
        for (int l = 0; l < L; ++l) {
            const double wl = W[m.leaves[l]] * D[l];
            const double up = U.du(wl) * D[l], upp = U.d2u(wl) * D[l] * D[l];
            const auto& chain = m.path_nodes(l);
            for (std::size_t a = 0; a < chain.size(); ++a) {
                const int ja = pos[chain[a]];
                if (ja < 0) continue;
                const double ra = m.dS0(chain[a], m.slot_on_path(chain[a], l));
                grad[ja] += m.path_prob[l] * up * ra;
                denom[ja] += m.path_prob[l] * std::abs(up * ra);
                for (std::size_t b = a; b < chain.size(); ++b) {
                    const int jb = pos[chain[b]];
                    if (jb < 0) continue;
                    const double rb = m.dS0(chain[b], m.slot_on_path(chain[b], l));
                    // lower triangle of -Hessian (SPD)
                    trip.emplace_back(std::max(ja, jb), std::min(ja, jb),
                                      -m.path_prob[l] * upp * ra * rb);
                }
            }
        }
        rel_foc = 0.0;
        for (int j = 0; j < K; ++j)
            rel_foc = std::max(rel_foc, std::abs(grad[j]) / (denom[j] + 1e-300));
        if (rel_foc <= 5e-15) break;

        A.setFromTriplets(trip.begin(), trip.end());
        if (!analyzed) { ldlt.analyzePattern(A); analyzed = true; }
        ldlt.factorize(A);
        if (ldlt.info() != Eigen::Success)
            throw NonConvergence("Newton Hessian factorization failed");
        Eigen::VectorXd d = ldlt.solve(grad);

        std::fill(dH.begin(), dH.end(), 0.0);
        for (int j = 0; j < K; ++j) dH[vars[j]] = d[j];
        forward_wealth(m, dH, 0.0, dW);

        // Fraction-to-boundary on terminal 0-market wealth positivity.
        double tmax = 1.0;
        for (int l = 0; l < L; ++l) {
            const double w = W[m.leaves[l]], dw = dW[m.leaves[l]];
            if (dw < 0.0) tmax = std::min(tmax, -0.995 * w / dw);
        }
        if (!(tmax > 0.0)) throw NonConvergence("no feasible Newton step");

        const double slope = grad.dot(d);
        if (!(slope > 0.0)) throw NonConvergence("Newton direction is not an ascent");
        // Near the optimum the objective moves at rounding level and Armijo
        // comparisons are noise; switch to pure (feasibility-clamped) Newton.
        const bool endgame = rel_foc <= 1e-4;
        double t = tmax;
        bool accepted = false;
        for (int ls = 0; ls < 70; ++ls) {
            Wtrial.resize(W.size());
            bool feasible = true;
            for (std::size_t i = 0; i < W.size(); ++i) Wtrial[i] = W[i] + t * dW[i];
            for (int l = 0; l < L; ++l)
                if (!(Wtrial[m.leaves[l]] > 0.0)) { feasible = false; break; }
            if (feasible) {
                const double ft = objective(Wtrial);
                if (endgame || ft >= f + 1e-4 * t * slope) {
                    for (std::size_t i = 0; i < H.size(); ++i) H[i] += t * dH[i];
                    W.swap(Wtrial);
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (rel_foc <= 1e-12) break;
            throw Unbounded("line search failed; per-node maximization diverges");
        }
    }
    if (rel_foc > 1e-12) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "FOC residual %.3e above 1e-12", rel_foc);
        throw NonConvergence(buf);
    }

    OptimalPair pair;
    pair.delta = delta;
    pair.x = x;
    pair.foc_residual = rel_foc;
    pair.ldelta = ld;
    pair.amounts = H;
    pair.base_wealth_node = W;

    pair.base_wealth_T.resize(L);
    pair.xhat_T.resize(L);
    pair.yhat_T.resize(L);
    for (int l = 0; l < L; ++l) {
        pair.base_wealth_T[l] = W[m.leaves[l]];
        pair.xhat_T[l] = W[m.leaves[l]] * D[l];
        pair.yhat_T[l] = U.du(pair.xhat_T[l]);
        if (!(pair.base_wealth_T[l] > 0.0))
            throw NonConvergence("non-positive optimal wealth at leaf");
    }

    // Positivity along all paths (holds at the optimum; assert).
    for (double w : W)
        if (!(w > 0.0)) throw NonConvergence("non-positive optimal wealth at a node");

    // Perturbed wealth process and proportions.
    pair.wealth_node.assign(m.nodes.size(), 0.0);
    std::vector<double> lnode(m.nodes.size(), 1.0);
    for (const auto& layer : m.levels)
        for (int id : layer) {
            const TreeNode& n = m.nodes[id];
            for (std::size_t s = 0; s < n.children.size(); ++s) {
                const double inc = delta * n.nu * m.dS0(id, static_cast<int>(s)) +
                                   0.5 * delta * delta * n.nu * n.nu * n.qv;
                lnode[n.children[s]] = lnode[id] * std::exp(-inc);
            }
        }
    pair.pi_hat.assign(m.nodes.size(), 0.0);
    for (std::size_t id = 0; id < m.nodes.size(); ++id) {
        pair.wealth_node[id] = W[id] / lnode[id];
        if (!m.nodes[id].children.empty())
            pair.pi_hat[id] = H[id] / W[id] + delta * m.nodes[id].nu;
    }

    double exy = 0.0, eu = 0.0, ev = 0.0;
    for (int l = 0; l < L; ++l) {
        exy += m.path_prob[l] * pair.xhat_T[l] * pair.yhat_T[l];
        eu += m.path_prob[l] * U.u(pair.xhat_T[l]);
        ev += m.path_prob[l] * U.v(pair.yhat_T[l]);
    }
    pair.y = exy / x;
    pair.u0 = eu;
    pair.v0 = ev;
    pair.r_weights.resize(L);
    for (int l = 0; l < L; ++l)
        pair.r_weights[l] = m.path_prob[l] * pair.xhat_T[l] * pair.yhat_T[l] / exy;

    if (delta == 0.0) {
        pair.deflator_node.assign(m.nodes.size(), 0.0);
        for (int l = 0; l < L; ++l) pair.deflator_node[m.leaves[l]] = pair.yhat_T[l];
        for (auto it = m.levels.rbegin(); it != m.levels.rend(); ++it)
            for (int id : *it) {
                const TreeNode& n = m.nodes[id];
                if (n.children.empty()) continue;
                double s = 0.0;
                for (std::size_t c = 0; c < n.children.size(); ++c)
                    s += n.prob[c] * pair.deflator_node[n.children[c]];
                pair.deflator_node[id] = s;
            }
    }
    return pair;
}

RiskToleranceResult risk_tolerance(OptimalPair& pair, const TreeMarket& m, const Utility& U,
                                   double tol) {
    if (pair.delta != 0.0)
        throw std::invalid_argument("risk tolerance is defined for the 0-model pair");
    const int L = m.n_leaves();
    std::vector<double> R(m.nodes.size(), 0.0);
    for (int l = 0; l < L; ++l) {
        const double xl = pair.xhat_T[l];
        R[m.leaves[l]] = -U.du(xl) / U.d2u(xl);
    }
    // Price the payoff under the node-wise deflator, then test whether the
    // priced process is self-financing (its moves lie in span{dS0}).
    double worst = 0.0;
    for (auto it = m.levels.rbegin(); it != m.levels.rend(); ++it)
        for (int id : *it) {
            const TreeNode& n = m.nodes[id];
            if (n.children.empty()) continue;
            double num = 0.0;
            for (std::size_t c = 0; c < n.children.size(); ++c)
                num += n.prob[c] * pair.deflator_node[n.children[c]] * R[n.children[c]];
            R[id] = num / pair.deflator_node[id];
            double srr = 0.0, srs = 0.0, sss = 0.0;
            for (std::size_t c = 0; c < n.children.size(); ++c) {
                const double ds = m.dS0(id, static_cast<int>(c));
                const double dr = R[n.children[c]] - R[id];
                srs += n.prob[c] * dr * ds;
                sss += n.prob[c] * ds * ds;
                srr = std::max(srr, std::abs(dr));
            }
            const double h = (sss > 0.0) ? srs / sss : 0.0;
            double resid = 0.0;
            for (std::size_t c = 0; c < n.children.size(); ++c) {
                const double e = R[n.children[c]] - R[id] - h * m.dS0(id, static_cast<int>(c));
                resid = std::max(resid, std::abs(e));
            }
            worst = std::max(worst, resid / std::max(1.0, std::abs(R[id])));
        }

    RiskToleranceResult res;
    res.max_residual = worst;
    res.exists = worst <= tol;
    if (res.exists) {
        res.r0 = R[0];
        pair.rt_exists = true;
        pair.r0 = R[0];
        pair.rt_node = std::move(R);
        pair.rt_residual = worst;
        pair.rtilde_weights.resize(L);
        for (int l = 0; l < L; ++l)
            pair.rtilde_weights[l] = m.path_prob[l] * pair.rt_node[m.leaves[l]] *
                                     pair.yhat_T[l] / (pair.r0 * pair.y);
    } else {
        pair.rt_exists = false;
        pair.rt_residual = worst;
    }
    return res;
}

PathFunctional measure_r_tilde(const OptimalPair& pair) {
    if (!pair.rt_exists) throw RiskToleranceMissing();
    return pair.rtilde_weights;
}

DualSolution dual_solve(const TreeMarket& m, const Utility& U, double y, double delta) {
    if (!(y > 0.0)) throw std::invalid_argument("dual initial value must be positive");
    const int L = m.n_leaves();
    PathFunctional lam = (delta == 0.0) ? PathFunctional::Ones(L) : m.l_delta_exp(delta);

    // Feasible start: forward product of per-node minimum-norm deflator weights.
    std::vector<double> Z(m.nodes.size(), 0.0);
    Z[0] = y;
    for (const auto& layer : m.levels)
        for (int id : layer) {
            const TreeNode& n = m.nodes[id];
            if (n.children.empty()) continue;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t c = 0; c < n.children.size(); ++c) {
                const double ds = m.dS0(id, static_cast<int>(c));
                m1 += n.prob[c] * ds;
                m2 += n.prob[c] * ds * ds;
            }
            for (std::size_t c = 0; c < n.children.size(); ++c) {
                double q = 1.0;
                if (m2 > 0.0) {
                    const double den = m2 - m1 * m1;
                    const double alpha = m2 / den, beta = -m1 / den;
                    q = alpha + beta * m.dS0(id, static_cast<int>(c));
                }
                if (!(q > 0.0))
                    throw NonConvergence("dual feasible start has non-positive weights");
                Z[n.children[c]] = Z[id] * q;
            }
        }
    Eigen::VectorXd Y(L);
    for (int l = 0; l < L; ++l) Y[l] = Z[m.leaves[l]];

    // Constraints A Y = b: E[Y_T] = y and, per tradable node, E[Y_T dS0 1_n] = 0.
    const std::vector<int> vars = tradable_nodes(m);
    const int K = static_cast<int>(vars.size());
    std::vector<Eigen::Triplet<double>> atrip;
    atrip.reserve(static_cast<std::size_t>(L) * (m.levels.size() + 1));
    for (int l = 0; l < L; ++l) atrip.emplace_back(0, l, m.path_prob[l]);
    for (int j = 0; j < K; ++j) {
        const TreeNode& n = m.nodes[vars[j]];
        for (int l = n.leaf_lo; l < n.leaf_hi; ++l)
            atrip.emplace_back(j + 1, l,
                               m.path_prob[l] * m.dS0(vars[j], m.slot_on_path(vars[j], l)));
    }
    Eigen::SparseMatrix<double> A(K + 1, L);
    A.setFromTriplets(atrip.begin(), atrip.end());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(K + 1);
    b[0] = y;

    auto value = [&](const Eigen::VectorXd& Yc) {
        double v = 0.0;
        for (int l = 0; l < L; ++l) v += m.path_prob[l] * U.v(Yc[l] * lam[l]);
        return v;
    };
    double fv = value(Y);

    Eigen::SparseMatrix<double> kkt(L + K + 1, L + K + 1);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    double kkt_res = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < 120; ++iter) {
        Eigen::VectorXd g(L), h(L);
        for (int l = 0; l < L; ++l) {
            g[l] = m.path_prob[l] * U.dv(Y[l] * lam[l]) * lam[l];
            h[l] = m.path_prob[l] * U.d2v(Y[l] * lam[l]) * lam[l] * lam[l];
        }
        std::vector<Eigen::Triplet<double>> kt;
        kt.reserve(L + 2 * atrip.size());
        for (int l = 0; l < L; ++l) kt.emplace_back(l, l, h[l]);
        for (const auto& t : atrip) {
            kt.emplace_back(L + t.row(), t.col(), t.value());
            kt.emplace_back(t.col(), L + t.row(), t.value());
        }
        kkt.setFromTriplets(kt.begin(), kt.end());
        if (iter == 0) lu.analyzePattern(kkt);
        lu.factorize(kkt);
        if (lu.info() != Eigen::Success)
            throw NonConvergence("dual KKT factorization failed");

        Eigen::VectorXd rhs(L + K + 1);
        rhs.head(L) = -g;
        rhs.tail(K + 1) = b - A * Y;
        Eigen::VectorXd sol = lu.solve(rhs);
        Eigen::VectorXd d = sol.head(L);
        Eigen::VectorXd mu = sol.tail(K + 1);

        // Stationarity of the current iterate.
        Eigen::VectorXd station = g + A.transpose() * mu;
        double gn = 0.0;
        for (int l = 0; l < L; ++l)
            gn = std::max(gn, std::abs(station[l]) / (m.path_prob[l] *
                          std::abs(U.dv(Y[l] * lam[l]) * lam[l]) + 1e-300));
        kkt_res = gn;
        if (gn <= 1e-12 && (b - A * Y).cwiseAbs().maxCoeff() <= 1e-12 * y) break;

        double tmax = 1.0;
        for (int l = 0; l < L; ++l)
            if (d[l] < 0.0) tmax = std::min(tmax, -0.995 * Y[l] / d[l]);
        double t = tmax;
        bool accepted = false;
        for (int ls = 0; ls < 70; ++ls) {
            Eigen::VectorXd Yt = Y + t * d;
            if (Yt.minCoeff() > 0.0) {
                const double ft = value(Yt);
                if (ft <= fv + 1e-12 * std::abs(fv) || t < 1e-12) {
                    Y = Yt;
                    fv = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted) break;
    }
    if (kkt_res > 1e-10)
        throw NonConvergence("dual KKT residual " + std::to_string(kkt_res));

    DualSolution out;
    out.value = fv;
    out.kkt_residual = kkt_res;
    out.yhat_T.resize(L);
    for (int l = 0; l < L; ++l) out.yhat_T[l] = Y[l] * lam[l];
    return out;
}

DeflatorCheck verify_deflator(const OptimalPair& pair, const TreeMarket& m) {
    DeflatorCheck chk;
    if (pair.deflator_node.empty()) return chk;
    for (int id : m.internal) {
        const TreeNode& n = m.nodes[id];
        double orth = 0.0, orth_den = 0.0, mart = 0.0;
        for (std::size_t c = 0; c < n.children.size(); ++c) {
            const double ds = m.dS0(id, static_cast<int>(c));
            const double yc = pair.deflator_node[n.children[c]];
            orth += n.prob[c] * yc * ds;
            orth_den += n.prob[c] * yc * std::abs(ds);
            mart += n.prob[c] * yc * pair.wealth_node[n.children[c]];
        }
        if (orth_den > 0.0)
            chk.max_orthogonality = std::max(chk.max_orthogonality, std::abs(orth) / orth_den);
        const double xy = pair.deflator_node[id] * pair.wealth_node[id];
        chk.max_martingale =
            std::max(chk.max_martingale, std::abs(mart - xy) / std::max(1.0, std::abs(xy)));
    }
    chk.weight_sum_error = std::abs(pair.r_weights.sum() - 1.0);
    return chk;
}

}  // namespace mprs
