#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mprs/kw.hpp"
#include "mprs/oracle.hpp"
#include "mprs/strategies.hpp"

namespace mprs {

/// One named pass/fail check; cmp is "<=", ">=", or "==".
struct Check {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    std::string cmp = "<=";
    bool pass = false;
};

Check check_le(const std::string& name, double value, double threshold);
Check check_ge(const std::string& name, double value, double threshold);

nlohmann::json to_json(const OptimalPair& pair);
nlohmann::json to_json(const SensitivityReport& rep);
nlohmann::json to_json(const IdentityReport& rep);
nlohmann::json to_json(const KWDecomposition& kw);
nlohmann::json to_json(const std::vector<Check>& checks);

/// Report skeleton with schema_version and config hash.
nlohmann::json report_frame(const nlohmann::json& config);

void write_text(const std::string& path, const std::string& text);

/// ray, t, u_oracle, u_pred, residual, slope
void write_expansion_csv(const std::string& path, const std::vector<RayProbe>& probes);

/// node, time, pi_hat, gamma0, gamma1, active0, active1
void write_strategy_csv(const std::string& path, const TreeMarket& m,
                        const CorrectedStrategy& cs);

/// c, K, truncated moment
void write_counterexample_csv(const std::string& path, double c,
                              const std::vector<std::pair<double, double>>& table);

/// estimate, stderr, n_paths, seed
void write_mc_csv(const std::string& path, double estimate, double stderr_,
                  std::int64_t n_paths, std::uint64_t seed);

}  // namespace mprs
