#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

namespace mprs::mc {

/// Philox-4x32-10 counter-based generator: pure function of (key, counter),
/// so any path/step pair can be generated independently and reproducibly.
struct Philox4x32 {
    static std::array<std::uint32_t, 4> block(std::uint64_t key,
                                              std::uint64_t counter_hi,
                                              std::uint64_t counter_lo);
};

/// Two iid standard normals from one Philox block (Box-Muller).
std::array<double, 2> normal_pair(std::uint64_t key, std::uint64_t counter_hi,
                                  std::uint64_t counter_lo);

/// Brownian-increment ensemble: path i, step k draws are a pure function of
/// (seed, stream_id, i, k). With antithetic = true, odd paths mirror even ones.
struct PathEnsemble {
    std::int64_t n_paths = 0;
    int n_steps = 256;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    bool antithetic = false;

    PathEnsemble(std::int64_t n_paths_, int n_steps_, double T, std::uint64_t seed_,
                 std::uint64_t stream_id_ = 0, bool antithetic_ = false)
        : n_paths(n_paths_), n_steps(n_steps_), dt(T / n_steps_), seed(seed_),
          stream_id(stream_id_), antithetic(antithetic_) {}

    /// Increment of B over step k of path i, ~ N(0, dt).
    double increment(std::int64_t path, int step) const;
};

struct IncrementSanity {
    double worst_mean_z = 0.0;  // |sample mean| in step stderr units
    double worst_var_z = 0.0;   // |sample var - dt| in stderr units
    bool ok(double z = 5.0) const { return worst_mean_z <= z && worst_var_z <= z; }
};

/// Per-step sample mean/variance gate (5 standard errors by default).
IncrementSanity increment_sanity(const PathEnsemble& ens, std::int64_t sample_paths = 4096);

/// Closed-form Merton record for U(x)=x^p/p, constant lambda (in <M> units)
/// and sigma: M = sigma B, S0 = lambda sigma^2 dt + sigma dB.
struct MertonRecord {
    double p, lambda, sigma, x, T;
    double pi_star;  // lambda/(1-p)
    double u0, y, v0;
    double axx;      // 1 - p
    double r0;       // x/(1-p)
    /// u_delta = x y E^R[F] for a constant perturbation direction nu.
    double u_delta_const_nu(double nu) const;
};

MertonRecord merton_baseline(double p, double lambda0, double sigma, double x, double T);

struct Estimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::int64_t n = 0;
};

/// Importance-weighted estimate of u_delta = x y E^R[F] with weights
/// xhat yhat/(xy) from the closed-form Merton solution. nu(t, B_t) is
/// evaluated on the Euler grid. Deterministic for a fixed ensemble layout.
Estimate estimate_first_order(const PathEnsemble& ens, const MertonRecord& model,
                              const std::function<double(double, double)>& nu,
                              int threads = 1);

/// Sample mean and stderr of the importance weights (should be 1 within
/// sampling error).
Estimate weight_sanity(const PathEnsemble& ens, const MertonRecord& model, int threads = 1);

/// Divergence probe of the counterexample model (T = 1, lambda = 1, M = B,
/// power utility p in (0,1), nu_t = 3 B_t^2): truncated moments
/// E^R[min(zeta(c,0), K)] per truncation level K.
std::vector<std::pair<double, double>> counterexample_probe(
    double c, const std::vector<double>& truncations, const PathEnsemble& ens, double p,
    int threads = 1);

}  // namespace mprs::mc
