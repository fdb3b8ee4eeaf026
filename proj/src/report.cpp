#include "mprs/report.hpp"

#include <fstream>

#include "mprs/config.hpp"

namespace mprs {

namespace {

nlohmann::json vec(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

nlohmann::json mat2(const Eigen::Matrix2d& m) {
    return {{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}};
}

}  // namespace

Check check_le(const std::string& name, double value, double threshold) {
    return {name, value, threshold, "<=", value <= threshold};
}

Check check_ge(const std::string& name, double value, double threshold) {
    return {name, value, threshold, ">=", value >= threshold};
}

nlohmann::json to_json(const OptimalPair& pair) {
    nlohmann::json j;
    j["delta"] = pair.delta;
    j["x"] = pair.x;
    j["y"] = pair.y;
    j["u"] = pair.u0;
    j["v"] = pair.v0;
    j["foc_residual"] = pair.foc_residual;
    j["xhat_T"] = vec(pair.xhat_T);
    j["yhat_T"] = vec(pair.yhat_T);
    j["r_weights"] = vec(pair.r_weights);
    if (pair.rt_exists) {
        j["risk_tolerance"] = {{"exists", true},
                               {"r0", pair.r0},
                               {"residual", pair.rt_residual}};
    } else {
        j["risk_tolerance"] = {{"exists", false}, {"residual", pair.rt_residual}};
    }
    return j;
}

nlohmann::json to_json(const SensitivityReport& rep) {
    nlohmann::json j;
    j["grad_u"] = {rep.y, rep.u_delta};
    j["grad_v"] = {-rep.x, rep.u_delta};
    j["coefficients"] = {{"axx", rep.axx}, {"axd", rep.axd}, {"add", rep.add},
                         {"byy", rep.byy}, {"byd", rep.byd}, {"bdd", rep.bdd}};
    j["hessian_u"] = mat2(rep.Hu);
    j["hessian_v"] = mat2(rep.Hv);
    j["m0"] = vec(rep.m0);
    j["m1"] = vec(rep.m1);
    j["n0"] = vec(rep.n0);
    j["n1"] = vec(rep.n1);
    j["F"] = vec(rep.F);
    j["G"] = vec(rep.G);
    return j;
}

nlohmann::json to_json(const IdentityReport& rep) {
    nlohmann::json j;
    j["matrix_identity"] = rep.matrix_identity;
    j["gap_identity"] = rep.gap_identity;
    j["pointwise_primal"] = rep.pointwise_primal;
    j["pointwise_dual"] = rep.pointwise_dual;
    nlohmann::json marts = nlohmann::json::array();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) marts.push_back(rep.martingale[a][b]);
    j["martingale"] = marts;
    j["max_martingale"] = rep.max_martingale;
    j["orthogonality"] = rep.orthogonality;
    return j;
}

nlohmann::json to_json(const KWDecomposition& kw) {
    nlohmann::json j;
    j["p0"] = kw.p0;
    j["c_a"] = kw.c_a;
    j["c_b"] = kw.c_b;
    j["r0"] = kw.r0;
    j["reconstruction_residual"] = kw.recon_residual;
    j["orthogonality_residual"] = kw.ortho_residual;
    j["m_tilde_T"] = vec(kw.m_tilde_T);
    j["n_tilde_T"] = vec(kw.n_tilde_T);
    return j;
}

nlohmann::json to_json(const std::vector<Check>& checks) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks)
        arr.push_back({{"name", c.name},
                       {"value", c.value},
                       {"threshold", c.threshold},
                       {"cmp", c.cmp},
                       {"pass", c.pass}});
    return arr;
}

nlohmann::json report_frame(const nlohmann::json& config) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config_hash"] = config_hash(config);
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

void write_expansion_csv(const std::string& path, const std::vector<RayProbe>& probes) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "ray_dx,ray_ddelta,t,u_oracle,u_pred,residual,slope\n";
    out.precision(17);
    for (const auto& p : probes)
        for (std::size_t i = 0; i < p.t.size(); ++i)
            out << p.ray[0] << ',' << p.ray[1] << ',' << p.t[i] << ',' << p.u_oracle[i]
                << ',' << p.u_pred[i] << ',' << p.residual[i] << ',' << p.slope << '\n';
}

void write_strategy_csv(const std::string& path, const TreeMarket& m,
                        const CorrectedStrategy& cs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "node,time,pi_hat,gamma0,gamma1,active0,active1\n";
    out.precision(17);
    for (int id : m.internal)
        out << id << ',' << m.nodes[id].level * m.dt << ',' << cs.pi_hat[id] << ','
            << cs.gamma0[id] << ',' << cs.gamma1[id] << ',' << int(cs.active0[id]) << ','
            << int(cs.active1[id]) << '\n';
}

void write_counterexample_csv(const std::string& path, double c,
                              const std::vector<std::pair<double, double>>& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "c,K,truncated_moment\n";
    out.precision(17);
    for (auto [K, v] : table) out << c << ',' << K << ',' << v << '\n';
}

void write_mc_csv(const std::string& path, double estimate, double stderr_,
                  std::int64_t n_paths, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "estimate,stderr,n_paths,seed\n";
    out.precision(17);
    out << estimate << ',' << stderr_ << ',' << n_paths << ',' << seed << '\n';
}

}  // namespace mprs
