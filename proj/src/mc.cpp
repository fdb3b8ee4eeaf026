#include "mprs/mc.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

namespace mprs::mc {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::uint32_t k0,
                         std::uint32_t k1) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const std::array<std::uint32_t, 4> next = {
        static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
        static_cast<std::uint32_t>(p1),
        static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
        static_cast<std::uint32_t>(p0)};
    ctr = next;
}

// Deterministic chunked map-reduce: partial sums are accumulated per fixed
// chunk and combined in index order, so results do not depend on threads.
constexpr std::int64_t kChunk = 8192;

template <typename PerPath>
std::vector<std::array<double, 2>> chunked_sums(std::int64_t n_paths, int threads,
                                                const PerPath& per_path) {
    const std::int64_t n_chunks = (n_paths + kChunk - 1) / kChunk;
    std::vector<std::array<double, 2>> partial(n_chunks, {0.0, 0.0});
    auto work = [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            double s = 0.0, s2 = 0.0;
            const std::int64_t lo = c * kChunk, hi = std::min(n_paths, lo + kChunk);
            for (std::int64_t i = lo; i < hi; ++i) {
                const double v = per_path(i);
                s += v;
                s2 += v * v;
            }
            partial[c] = {s, s2};
        }
    };
    if (threads <= 1 || n_chunks <= 1) {
        work(0, n_chunks);
    } else {
        const int nt = std::min<std::int64_t>(threads, n_chunks);
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) {
            const std::int64_t c0 = n_chunks * t / nt, c1 = n_chunks * (t + 1) / nt;
            pool.emplace_back(work, c0, c1);
        }
        for (auto& th : pool) th.join();
    }
    return partial;
}

Estimate reduce(const std::vector<std::array<double, 2>>& partial, std::int64_t n) {
    double s = 0.0, s2 = 0.0;
    for (const auto& p : partial) { s += p[0]; s2 += p[1]; }
    Estimate e;
    e.n = n;
    e.value = s / n;
    const double var = std::max(0.0, s2 / n - e.value * e.value);
    e.stderr_ = std::sqrt(var / n);
    return e;
}

// With antithetic pairing the independent sampling unit is the pair average.
template <typename PerPath>
Estimate run_estimator(const PathEnsemble& ens, int threads, const PerPath& per_path) {
    if (ens.antithetic) {
        const std::int64_t n_pairs = ens.n_paths / 2;
        auto per_pair = [&](std::int64_t u) {
            return 0.5 * (per_path(2 * u) + per_path(2 * u + 1));
        };
        Estimate e = reduce(chunked_sums(n_pairs, threads, per_pair), n_pairs);
        e.n = ens.n_paths;
        return e;
    }
    return reduce(chunked_sums(ens.n_paths, threads, per_path), ens.n_paths);
}

}  // namespace

std::array<std::uint32_t, 4> Philox4x32::block(std::uint64_t key, std::uint64_t counter_hi,
                                               std::uint64_t counter_lo) {
    std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(counter_lo), static_cast<std::uint32_t>(counter_lo >> 32),
        static_cast<std::uint32_t>(counter_hi), static_cast<std::uint32_t>(counter_hi >> 32)};
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
        philox_round(ctr, k0, k1);
        k0 += kWeyl0;
        k1 += kWeyl1;
    }
    return ctr;
}

std::array<double, 2> normal_pair(std::uint64_t key, std::uint64_t counter_hi,
                                  std::uint64_t counter_lo) {
    const auto b = Philox4x32::block(key, counter_hi, counter_lo);
    const std::uint64_t u1 =
        (static_cast<std::uint64_t>(b[0]) << 32 | b[1]) >> 11;  // 53 bits
    const std::uint64_t u2 = (static_cast<std::uint64_t>(b[2]) << 32 | b[3]) >> 11;
    const double e1 = (u1 + 0.5) * 0x1.0p-53;  // in (0,1)
    const double e2 = (u2 + 0.5) * 0x1.0p-53;
    const double rad = std::sqrt(-2.0 * std::log(e1));
    const double ang = 6.283185307179586476925286766559 * e2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
}

double PathEnsemble::increment(std::int64_t path, int step) const {
    std::int64_t draw_path = path;
    double sign = 1.0;
    if (antithetic) {
        draw_path = path / 2;
        if (path % 2 == 1) sign = -1.0;
    }
    const std::uint64_t hi = (stream_id << 32) ^ static_cast<std::uint64_t>(draw_path);
    const auto z = normal_pair(seed, hi, static_cast<std::uint64_t>(step / 2));
    return sign * z[step % 2] * std::sqrt(dt);
}

IncrementSanity increment_sanity(const PathEnsemble& ens, std::int64_t sample_paths) {
    IncrementSanity s;
    const std::int64_t n = std::min(sample_paths, ens.n_paths);
    for (int k = 0; k < ens.n_steps; ++k) {
        double m = 0.0, v = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double z = ens.increment(i, k);
            m += z;
            v += z * z;
        }
        m /= n;
        v = v / n - m * m;
        const double se_mean = std::sqrt(ens.dt / n);
        const double se_var = ens.dt * std::sqrt(2.0 / n);
        s.worst_mean_z = std::max(s.worst_mean_z, std::abs(m) / se_mean);
        s.worst_var_z = std::max(s.worst_var_z, std::abs(v - ens.dt) / se_var);
    }
    return s;
}

MertonRecord merton_baseline(double p, double lambda0, double sigma, double x, double T) {
    if (p >= 1.0 || p == 0.0) throw std::invalid_argument("merton baseline requires power p");
    if (sigma <= 0.0 || T <= 0.0 || x <= 0.0)
        throw std::invalid_argument("merton baseline requires sigma, T, x > 0");
    MertonRecord r;
    r.p = p;
    r.lambda = lambda0;
    r.sigma = sigma;
    r.x = x;
    r.T = T;
    r.pi_star = lambda0 / (1.0 - p);
    const double growth = p * lambda0 * lambda0 * sigma * sigma * T / (2.0 * (1.0 - p));
    r.u0 = std::pow(x, p) / p * std::exp(growth);
    r.y = std::pow(x, p - 1.0) * std::exp(growth);
    r.v0 = r.u0 - x * r.y;
    r.axx = 1.0 - p;
    r.r0 = x / (1.0 - p);
    return r;
}

double MertonRecord::u_delta_const_nu(double nu) const {
    // Under R(x,0), B gains drift p pi* sigma; F = nu(lambda sigma^2 T + sigma B_T).
    const double drift = p * pi_star * sigma;
    const double eF = nu * (lambda * sigma * sigma * T + sigma * drift * T);
    return x * y * eF;
}

namespace {

struct PathEval {
    double F = 0.0;     // integral of nu dS0
    double w = 0.0;     // importance weight xhat yhat/(xy)
    double logzeta = 0.0;
};

// One Euler pass over a path; `need_zeta` adds G and |.| terms for zeta(c,0).
template <bool need_zeta>
PathEval eval_path(const PathEnsemble& ens, const MertonRecord& model,
                   const std::function<double(double, double)>& nu, std::int64_t i,
                   double c) {
    double B = 0.0, F = 0.0, G = 0.0;
    const double s2 = model.sigma * model.sigma;
    for (int k = 0; k < ens.n_steps; ++k) {
        const double t = k * ens.dt;
        const double nv = nu(t, B);
        const double dB = ens.increment(i, k);
        F += nv * (model.lambda * s2 * ens.dt + model.sigma * dB);
        if (need_zeta) G += nv * nv * s2 * ens.dt;
        B += dB;
    }
    PathEval out;
    out.F = F;
    // xhat yhat = xhat^p; w = exp(p pi* sigma B_T - p^2 pi*^2 sigma^2 T/2) after
    // normalization by xy.
    const double a = model.p * model.pi_star * model.sigma;
    out.w = std::exp(a * B - 0.5 * a * a * model.T);
    if (need_zeta) out.logzeta = c * (std::abs(F) + G);
    return out;
}

}  // namespace

Estimate estimate_first_order(const PathEnsemble& ens, const MertonRecord& model,
                              const std::function<double(double, double)>& nu,
                              int threads) {
    auto per_path = [&](std::int64_t i) {
        const PathEval e = eval_path<false>(ens, model, nu, i, 0.0);
        return model.x * model.y * e.w * e.F;
    };
    return run_estimator(ens, threads, per_path);
}

Estimate weight_sanity(const PathEnsemble& ens, const MertonRecord& model, int threads) {
    auto nu0 = [](double, double) { return 0.0; };
    auto per_path = [&](std::int64_t i) {
        return eval_path<false>(ens, model, nu0, i, 0.0).w;
    };
    return run_estimator(ens, threads, per_path);
}

std::vector<std::pair<double, double>> counterexample_probe(
    double c, const std::vector<double>& truncations, const PathEnsemble& ens, double p,
    int threads) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("counterexample model requires p in (0,1)");
    if (c < 0.0) throw std::invalid_argument("counterexample requires c >= 0");
    MertonRecord model = merton_baseline(p, 1.0, 1.0, 1.0, 1.0);
    auto nu = [](double, double B) { return 3.0 * B * B; };

    // One pass over the ensemble covers every truncation level; per-chunk
    // partial sums keep the reduction order fixed.
    const std::size_t nk = truncations.size();
    const std::int64_t n_chunks = (ens.n_paths + kChunk - 1) / kChunk;
    std::vector<std::vector<double>> partial(n_chunks, std::vector<double>(nk, 0.0));
    auto work = [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t ch = c0; ch < c1; ++ch) {
            std::vector<double>& acc = partial[ch];
            const std::int64_t lo = ch * kChunk,
                               hi = std::min(ens.n_paths, lo + kChunk);
            for (std::int64_t i = lo; i < hi; ++i) {
                const PathEval e = eval_path<true>(ens, model, nu, i, c);
                for (std::size_t k = 0; k < nk; ++k) {
                    const double K = truncations[k];
                    const double z =
                        (e.logzeta >= std::log(K)) ? K : std::exp(e.logzeta);
                    acc[k] += e.w * z;
                }
            }
        }
    };
    if (threads <= 1 || n_chunks <= 1) {
        work(0, n_chunks);
    } else {
        const int nt = static_cast<int>(std::min<std::int64_t>(threads, n_chunks));
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t)
            pool.emplace_back(work, n_chunks * t / nt, n_chunks * (t + 1) / nt);
        for (auto& th : pool) th.join();
    }
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k < nk; ++k) {
        double s = 0.0;
        for (const auto& acc : partial) s += acc[k];
        out.emplace_back(truncations[k], s / static_cast<double>(ens.n_paths));
    }
    return out;
}

}  // namespace mprs::mc
