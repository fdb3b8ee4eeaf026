#pragma once

#include <stdexcept>
#include <string>

namespace mprs {

/// Discrete Doleans-Dade factor 1 - delta*nu*dS0 hit zero or below on some
/// edge: delta is outside the positivity radius of this tree.
struct NonPositiveExponential : std::runtime_error {
    int node;
    NonPositiveExponential(int node_, double factor)
        : std::runtime_error("non-positive Doleans-Dade edge factor " +
                             std::to_string(factor) + " at node " +
                             std::to_string(node_)),
          node(node_) {}
};

/// The risk-tolerance wealth process does not exist for this instance; the
/// KW route is unavailable and callers should fall back to the direct
/// quadratic programs.
struct RiskToleranceMissing : std::runtime_error {
    RiskToleranceMissing()
        : std::runtime_error("risk-tolerance wealth process does not exist") {}
};

/// Corrected strategy drove wealth to zero or below along some edge.
struct PositivityViolation : std::runtime_error {
    int node;
    PositivityViolation(int node_, double wealth)
        : std::runtime_error("corrected wealth factor " + std::to_string(wealth) +
                             " non-positive at node " + std::to_string(node_)),
          node(node_) {}
};

/// A node has a vanishing hedging increment but the target martingale moves.
struct DegenerateIncrement : std::runtime_error {
    int node;
    explicit DegenerateIncrement(int node_)
        : std::runtime_error("zero M^R increment with nonzero target at node " +
                             std::to_string(node_)),
          node(node_) {}
};

struct NonConvergence : std::runtime_error {
    explicit NonConvergence(const std::string& what_) : std::runtime_error(what_) {}
};

struct Unbounded : std::runtime_error {
    explicit Unbounded(const std::string& what_) : std::runtime_error(what_) {}
};

/// Config schema violation; `key` is the path of the offending entry.
struct ConfigError : std::runtime_error {
    std::string key;
    ConfigError(std::string key_, const std::string& what_)
        : std::runtime_error("config error at '" + key_ + "': " + what_),
          key(std::move(key_)) {}
};

}  // namespace mprs
