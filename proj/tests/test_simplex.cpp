// Simplex grids: enumeration order, rank/unrank, shifts and the discrete
// measure-derivative operator.
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fsmfg/simplex.hpp"

using namespace mfg;

namespace {

// Independent cardinality oracle: Pascal's rule on binomial(m + d - 1, d - 1).
long long binomial(int n, int k) {
    std::vector<std::vector<long long>> p(n + 1, std::vector<long long>(n + 1, 0));
    for (int i = 0; i <= n; ++i) {
        p[i][0] = 1;
        for (int j = 1; j <= i; ++j) p[i][j] = p[i - 1][j - 1] + (j <= i - 1 ? p[i - 1][j] : 0);
    }
    return p[n][k];
}

}  // namespace

TEST_CASE("two-state grid of resolution 3 lists its four points in count order") {
    const SimplexGrid g = SimplexGrid::enumerate(2, 3);
    REQUIRE(g.size() == 4);
    const Vec expect[4] = {{0.0, 1.0}, {1.0 / 3, 2.0 / 3}, {2.0 / 3, 1.0 / 3}, {1.0, 0.0}};
    for (long long r = 0; r < 4; ++r) {
        const Vec eta = g.unrank(r);
        for (int i = 0; i < 2; ++i) CHECK(eta[i] == doctest::Approx(expect[r][i]).epsilon(1e-15));
    }
    CHECK(g.rank(Vec{0.0, 1.0}) == 0);
    CHECK(g.rank(Vec{1.0, 0.0}) == 3);
    CHECK(g.unrank_counts(1) == std::vector<int>{1, 2});
}

TEST_CASE("grid sizes match the stars-and-bars count") {
    CHECK(SimplexGrid::enumerate(3, 2).size() == 6);
    CHECK(SimplexGrid::enumerate(2, 1).size() == 2);
    for (int d = 2; d <= 5; ++d)
        for (int m = 1; m <= 50; m += 7) {
            const SimplexGrid g = SimplexGrid::enumerate(d, m);
            CHECK(g.size() == binomial(m + d - 1, d - 1));
        }
}

TEST_CASE("resolution-1 grid is the set of vertices") {
    const SimplexGrid g = SimplexGrid::enumerate(2, 1);
    CHECK(g.unrank(0) == Vec{0.0, 1.0});
    CHECK(g.unrank(1) == Vec{1.0, 0.0});
}

TEST_CASE("rank and unrank are inverse over whole grids") {
    for (const auto& [d, m] : {std::pair{3, 2}, std::pair{4, 5}}) {
        const SimplexGrid g = SimplexGrid::enumerate(d, m);
        for (long long r = 0; r < g.size(); ++r) {
            CHECK(g.rank_counts(g.unrank_counts(r)) == r);
            CHECK(g.rank(g.unrank(r)) == r);
        }
    }
}

TEST_CASE("off-grid measures are rejected") {
    const SimplexGrid g = SimplexGrid::enumerate(2, 3);
    CHECK_THROWS_AS(g.rank(Vec{0.5, 0.5}), InvalidInput);
    CHECK_THROWS_AS(g.rank(Vec{0.2, 0.8}), InvalidInput);
}

TEST_CASE("one-player shifts move 1/m of mass and respect emptiness") {
    const Vec eta = {1.0 / 3, 2.0 / 3};
    const Vec moved = shift(eta, 1, 0, 3);
    CHECK(moved[0] == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(moved[1] == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(shift(eta, 1, 1, 3) == eta);
    CHECK_THROWS_AS(shift(Vec{0.0, 1.0}, 0, 1, 3), InfeasibleShift);
}

TEST_CASE("precomputed shifted ranks agree with shifting and ranking") {
    const SimplexGrid g = SimplexGrid::enumerate(3, 4);
    for (long long r = 0; r < g.size(); ++r) {
        const Vec eta = g.unrank(r);
        for (int y = 0; y < 3; ++y)
            for (int z = 0; z < 3; ++z) {
                if (y == z) {
                    CHECK(g.shifted_rank(r, y, z) == r);
                    continue;
                }
                const auto counts = g.unrank_counts(r);
                if (counts[y] == 0) {
                    CHECK(g.shifted_rank(r, y, z) == -1);
                } else {
                    CHECK(g.shifted_rank(r, y, z) == g.rank(shift(eta, y, z, 4)));
                }
            }
    }
}

TEST_CASE("discrete derivative is exact on constants and coordinates") {
    const int n = 5;  // operators live on the resolution n-1 = 4 grid
    const Vec eta = {0.25, 0.5, 0.25};
    CHECK(d_operator([](const Vec&) { return 3.7; }, n, 0, 1, eta) == doctest::Approx(0.0));
    CHECK(d_operator([](const Vec& e) { return e[1]; }, n, 0, 1, eta) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d_operator([](const Vec& e) { return e[0]; }, n, 0, 1, eta) ==
          doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS_AS(d_operator([](const Vec&) { return 0.0; }, n, 0, 1, Vec{0.0, 0.5, 0.5}),
                    InfeasibleShift);
}

TEST_CASE("discrete derivative of the squared norm overshoots by exactly 2/(n-1)") {
    // For phi(eta) = sum eta_i^2 the difference quotient evaluates to
    // 2(eta_z - eta_y) + 2/(n-1): the directional derivative plus a
    // resolution-sized curvature term. This pins the operator's scaling.
    auto phi = [](const Vec& e) {
        double s = 0.0;
        for (double v : e) s += v * v;
        return s;
    };
    for (int n : {3, 5, 9, 33}) {
        const int m = n - 1;
        const SimplexGrid g = SimplexGrid::enumerate(3, m);
        const Vec eta = g.unrank(g.size() / 2);
        for (int y = 0; y < 3; ++y)
            for (int z = 0; z < 3; ++z) {
                if (y == z || eta[y] < 0.5 / m) continue;
                const double dop = d_operator(phi, n, y, z, eta);
                const double directional = 2.0 * (eta[z] - eta[y]);
                CHECK(dop - directional == doctest::Approx(2.0 / m).epsilon(1e-12));
            }
    }
}

TEST_CASE("grids beyond the storage cap are refused") {
    CHECK_THROWS_AS(SimplexGrid::enumerate(6, 200), CapacityError);
    // A tight explicit cap refuses a grid the default admits.
    CHECK_THROWS_AS(SimplexGrid::enumerate(3, 100, 100), CapacityError);
    CHECK_NOTHROW(SimplexGrid::enumerate(3, 100));
}
