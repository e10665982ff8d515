#pragma once
// Shared plumbing: error taxonomy, a stateless counter-based RNG, a minimal
// worker pool, and the path-interpolation helper used by the ODE solvers.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfg {

using Vec = std::vector<double>;

// Caller handed us something malformed (CLI maps this to exit code 2).
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A requested grid or solve exceeds the configured storage cap.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A simplex shift would move a player out of an empty state.
struct InfeasibleShift : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fixed-point iteration exhausted its budget; carries the last gap so the
// caller can decide whether to retry with stronger damping.
struct NonConvergence : std::runtime_error {
    double gap;
    int iterations;
    NonConvergence(const std::string& msg, double g, int it)
        : std::runtime_error(msg), gap(g), iterations(it) {}
};

// A non-finite value appeared mid-integration.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stateless stream: every draw is a pure hash of (key, counter), so
// replications are reproducible bit-for-bit no matter how work is scheduled
// across workers. Substreams are derived with fork(); within a substream the
// caller advances a plain counter.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : key_(splitmix64(seed ^ 0x6a09e667f3bcc909ull)) {}

    Stream fork(std::uint64_t word) const {
        Stream s(0);
        s.key_ = splitmix64(key_ ^ splitmix64(word ^ 0xbb67ae8584caa73bull));
        return s;
    }

    std::uint64_t bits(std::uint64_t ctr) const { return splitmix64(key_ + splitmix64(ctr + kGolden)); }

    // Uniform on [0, 1) with 53-bit resolution.
    double u01(std::uint64_t ctr) const { return static_cast<double>(bits(ctr) >> 11) * 0x1.0p-53; }

    double exponential(std::uint64_t ctr, double rate) const {
        return -std::log1p(-u01(ctr)) / rate;
    }

    // One standard normal per counter (Box-Muller, cosine branch); uses two
    // uniform draws at counters 2*ctr and 2*ctr+1.
    double normal(std::uint64_t ctr) const {
        const double u1 = u01(2 * ctr);
        const double u2 = u01(2 * ctr + 1);
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Index in [0, n) — unbiased enough for n << 2^64 (we only ever pick players).
    std::uint64_t index(std::uint64_t ctr, std::uint64_t n) const {
        return static_cast<std::uint64_t>(u01(ctr) * static_cast<double>(n)) % n;
    }

private:
    std::uint64_t key_;
};

}  // namespace rng

// Runs fn(0..count-1) on up to `jobs` workers. Each index writes its own
// output slot, so results are identical regardless of scheduling. The first
// exception thrown by any worker is re-thrown on the calling thread.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex guard;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < count;) {
                if (failed.load(std::memory_order_relaxed)) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(guard);
                    if (!failed.exchange(true)) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failed && error) std::rethrow_exception(error);
}

// Evaluates a uniformly sampled path at an arbitrary time with a 4-point
// Lagrange stencil (cubic, so the interpolant does not degrade a 4th-order
// integrator that samples frozen paths at half-steps). Falls back to linear
// when fewer than four knots exist. Knot k sits at t0 + k*dt.
inline void eval_path(const std::vector<Vec>& path, double t0, double dt, double t, Vec& out) {
    const std::size_t K = path.size() - 1;
    const std::size_t dim = path.front().size();
    out.resize(dim);
    if (K == 0) {
        out = path[0];
        return;
    }
    double s = (t - t0) / dt;
    if (s < 0) s = 0;
    if (s > static_cast<double>(K)) s = static_cast<double>(K);
    if (K < 3) {
        std::size_t i = static_cast<std::size_t>(s);
        if (i >= K) i = K - 1;
        const double w = s - static_cast<double>(i);
        for (std::size_t j = 0; j < dim; ++j) out[j] = (1.0 - w) * path[i][j] + w * path[i + 1][j];
        return;
    }
    std::size_t i = static_cast<std::size_t>(s);
    std::size_t lo = (i == 0) ? 0 : i - 1;
    if (lo > K - 3) lo = K - 3;
    double w[4];
    for (int j = 0; j < 4; ++j) {
        double num = 1.0, den = 1.0;
        const double xj = static_cast<double>(lo + j);
        for (int k = 0; k < 4; ++k) {
            if (k == j) continue;
            const double xk = static_cast<double>(lo + k);
            num *= (s - xk);
            den *= (xj - xk);
        }
        w[j] = num / den;
    }
    for (std::size_t j = 0; j < dim; ++j) {
        out[j] = w[0] * path[lo][j] + w[1] * path[lo + 1][j] + w[2] * path[lo + 2][j] +
                 w[3] * path[lo + 3][j];
    }
}

inline double sup_diff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    double m = 0;
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t j = 0; j < a[k].size(); ++j) m = std::max(m, std::abs(a[k][j] - b[k][j]));
    return m;
}

}  // namespace mfg
