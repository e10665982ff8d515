#include "fsmfg/simplex.hpp"

#include <cmath>
#include <unordered_map>

namespace mfg {

namespace {

// binomial(n, k) for the small arguments a grid ever needs; exact in 64 bits
// for n in the hundreds and k <= d-1.
long long binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    long long out = 1;
    for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
    return out;
}

// Packs a count vector into a hash key (counts stay well below 2^12 each).
std::uint64_t pack_counts(const std::vector<int>& counts) {
    std::uint64_t key = 0;
    for (int v : counts) key = (key << 12) | static_cast<std::uint64_t>(v);
    return key;
}

}  // namespace

// Number of compositions of `total` into `parts` nonnegative parts.
long long SimplexGrid::suffix_count(int parts, int total) const {
    return binomial(total + parts - 1, parts - 1);
}

SimplexGrid SimplexGrid::enumerate(int d, int m, long long cap) {
    if (d < 2) throw InvalidInput("simplex: d must be >= 2");
    if (m < 1) throw InvalidInput("simplex: m must be >= 1");
    SimplexGrid grid;
    grid.d_ = d;
    grid.m_ = m;
    grid.size_ = binomial(m + d - 1, d - 1);
    if (grid.size_ > cap) throw CapacityError("simplex: grid cardinality exceeds the configured cap");

    grid.counts_.resize(static_cast<std::size_t>(grid.size_) * d);
    std::vector<int> k(d, 0);
    k[d - 1] = m;  // ascending lexicographic order starts with all mass in the last slot
    std::unordered_map<std::uint64_t, long long> lookup;
    lookup.reserve(static_cast<std::size_t>(grid.size_) * 2);
    for (long long r = 0; r < grid.size_; ++r) {
        std::copy(k.begin(), k.end(), grid.counts_.begin() + static_cast<std::size_t>(r) * d);
        lookup.emplace(pack_counts(k), r);
        if (r + 1 == grid.size_) break;
        // successor: bump the rightmost position that still has mass strictly
        // after it, then push the remainder all the way right
        int i = d - 2;
        int after = k[d - 1];
        while (i > 0 && after == 0) {
            after += k[i];
            --i;
        }
        k[i] += 1;
        for (int j = i + 1; j < d; ++j) k[j] = 0;
        k[d - 1] = after - 1;
    }

    grid.shift_.assign(static_cast<std::size_t>(grid.size_) * d * d, -1);
    std::vector<int> moved(d);
    for (long long r = 0; r < grid.size_; ++r) {
        const int* base = &grid.counts_[static_cast<std::size_t>(r) * d];
        for (int y = 0; y < d; ++y) {
            for (int z = 0; z < d; ++z) {
                long long& slot = grid.shift_[(static_cast<std::size_t>(r) * d + y) * d + z];
                if (y == z) {
                    slot = r;
                    continue;
                }
                if (base[y] == 0) continue;  // stays -1: no player at y to move
                std::copy(base, base + d, moved.begin());
                moved[y] -= 1;
                moved[z] += 1;
                slot = lookup.at(pack_counts(moved));
            }
        }
    }
    return grid;
}

std::vector<int> SimplexGrid::unrank_counts(long long r) const {
    if (r < 0 || r >= size_) throw InvalidInput("simplex: rank out of range");
    return std::vector<int>(counts_.begin() + static_cast<std::size_t>(r) * d_,
                            counts_.begin() + static_cast<std::size_t>(r + 1) * d_);
}

Vec SimplexGrid::unrank(long long r) const {
    const std::vector<int> k = unrank_counts(r);
    Vec eta(d_);
    for (int i = 0; i < d_; ++i) eta[i] = static_cast<double>(k[i]) / m_;
    return eta;
}

long long SimplexGrid::rank_counts(const std::vector<int>& counts) const {
    if (static_cast<int>(counts.size()) != d_) throw InvalidInput("simplex: count vector has wrong length");
    int total = 0;
    for (int v : counts) {
        if (v < 0) throw InvalidInput("simplex: negative count");
        total += v;
    }
    if (total != m_) throw InvalidInput("simplex: counts do not sum to the grid resolution");
    long long r = 0;
    int rem = m_;
    for (int i = 0; i < d_ - 1; ++i) {
        for (int j = 0; j < counts[i]; ++j) r += suffix_count(d_ - 1 - i, rem - j);
        rem -= counts[i];
    }
    return r;
}

long long SimplexGrid::rank(const Vec& eta) const {
    if (static_cast<int>(eta.size()) != d_) throw InvalidInput("simplex: point has wrong dimension");
    std::vector<int> counts(d_);
    for (int i = 0; i < d_; ++i) {
        const double scaled = eta[i] * m_;
        const double rounded = std::round(scaled);
        if (std::abs(scaled - rounded) > 1e-9 * std::max(1.0, std::abs(scaled)) + 1e-9)
            throw InvalidInput("simplex: point is not on the grid (m * eta not integral)");
        counts[i] = static_cast<int>(rounded);
    }
    return rank_counts(counts);
}

Vec shift(const Vec& eta, int y, int z, int m) {
    const int d = static_cast<int>(eta.size());
    if (y < 0 || y >= d || z < 0 || z >= d) throw InvalidInput("shift: state out of range");
    if (y == z) return eta;
    if (eta[y] < 1.0 / m - 1e-9) throw InfeasibleShift("shift: no player at the source state");
    Vec out = eta;
    out[y] -= 1.0 / m;
    out[z] += 1.0 / m;
    if (out[y] < 0) out[y] = 0;  // scrub rounding residue at the boundary
    return out;
}

double d_operator(const std::function<double(const Vec&)>& phi, int n, int y, int z,
                  const Vec& eta) {
    if (n < 2) throw InvalidInput("d_operator: n must be >= 2");
    if (y == z) return 0.0;
    const Vec shifted = shift(eta, y, z, n - 1);
    return (n - 1) * (phi(shifted) - phi(eta));
}

}  // namespace mfg
