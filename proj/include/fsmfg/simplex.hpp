#pragma once
// Discrete probability simplices: the set of measures eta on [d] with
// m * eta integer-valued. Points are compositions of m into d nonnegative
// parts, enumerated in ascending lexicographic order on the integer count
// vectors; ranking/unranking is the standard combinatorial bijection.
//
// The grid also provides the (n-1)-scaled finite-difference operator on grid
// functions,
//     D^{n,y,z} phi(eta) = (n-1) * (phi(eta + (e_z - e_y)/(n-1)) - phi(eta)),
// defined on the m = n-1 grid; shifts that would move a player out of an
// empty state are errors, never extrapolated.

#include <cstdint>
#include <functional>
#include <vector>

#include "fsmfg/common.hpp"

namespace mfg {

class SimplexGrid {
public:
    // Enumerates the grid of resolution m on [d]. Throws CapacityError when
    // the cardinality binomial(m+d-1, d-1) exceeds cap.
    static SimplexGrid enumerate(int d, int m, long long cap = 20'000'000);

    int d() const { return d_; }
    int m() const { return m_; }
    long long size() const { return size_; }

    // Count vector (summing to m) of the grid point with the given rank.
    std::vector<int> unrank_counts(long long r) const;
    // Grid point as a probability vector (counts / m).
    Vec unrank(long long r) const;

    long long rank_counts(const std::vector<int>& counts) const;
    // Rank of a probability vector; throws InvalidInput unless m * eta is
    // integral within 1e-9 per component.
    long long rank(const Vec& eta) const;

    // Rank after moving one player from y to z, or -1 when state y is empty
    // at that point. Precomputed for all (point, y, z) triples.
    long long shifted_rank(long long r, int y, int z) const {
        return shift_[(static_cast<std::size_t>(r) * d_ + y) * d_ + z];
    }

private:
    int d_ = 0, m_ = 0;
    long long size_ = 0;
    std::vector<long long> binom_;          // binom_[k] = binomial(k + d - 2, d - 2)-style table
    std::vector<int> counts_;               // flattened count vectors, size_ * d_
    std::vector<long long> shift_;          // shifted ranks, size_ * d_ * d_
    long long suffix_count(int parts, int total) const;
};

// eta + (e_z - e_y)/m; y == z returns eta unchanged. Throws InfeasibleShift
// when eta_y < 1/m (no player to move).
Vec shift(const Vec& eta, int y, int z, int m);

// (n-1) * (phi(eta + (e_z - e_y)/(n-1)) - phi(eta)); infeasible shifts
// propagate as InfeasibleShift.
double d_operator(const std::function<double(const Vec&)>& phi, int n, int y, int z,
                  const Vec& eta);

}  // namespace mfg
