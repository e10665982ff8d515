// The exact n-player value system: right-hand side, backward solve,
// induced feedback policy, and the CSV exchange format.
#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fsmfg/hjb_n.hpp"

using namespace mfg;

namespace {

ModelSpec decoupled_model() {
    ModelSpec m;
    m.d = 2;
    m.T = 1.0;
    m.b1 = {0.0, 0.0};
    m.c = {0.5, 0.5};  // equal weights keep the value state-independent
    return m;
}

ModelSpec coupled_model() {
    ModelSpec m = decoupled_model();
    m.f2 = {CostFamily::Linear, 1.0};
    m.g = {CostFamily::Linear, 1.0};
    return m;
}

// Literal transcription of the backward right-hand side, with explicit count
// arithmetic instead of the solver's cached tables: for every other-player
// state y with mass, the point-of-view shift moves one player from y to the
// evaluation state x, that player's feedback comes from the value gaps at
// the shifted point, and each of its destinations z contributes the discrete
// derivative times the rate.
double rhs_oracle(const ModelSpec& model, int n, const SimplexGrid& g,
                  const std::vector<double>& slice, int x, long long r) {
    const int d = model.d, m = n - 1;
    const long long R = g.size();
    auto V = [&](int xx, long long rr) { return slice[static_cast<std::size_t>(xx) * R + rr]; };
    const std::vector<int> counts = g.unrank_counts(r);
    Vec eta(d);
    for (int i = 0; i < d; ++i) eta[i] = static_cast<double>(counts[i]) / m;

    Vec p(d);
    for (int l = 0; l < d; ++l) p[l] = V(l, r) - V(x, r);
    double out = hamiltonian_H1(model, x, p) + model.f2_at(x, eta);

    for (int y = 0; y < d; ++y) {
        if (counts[y] == 0) continue;
        std::vector<int> pov = counts;
        --pov[y];
        ++pov[x];
        const long long rp = g.rank_counts(pov);
        Vec py(d);
        for (int l = 0; l < d; ++l) py[l] = V(l, rp) - V(y, rp);
        const RateVector ay = optimal_rates(model, y, py);
        for (int z = 0; z < d; ++z) {
            if (z == y) continue;
            std::vector<int> moved = counts;
            --moved[y];
            ++moved[z];
            const long long rz = g.rank_counts(moved);
            out += eta[y] * m * (V(x, rz) - V(x, r)) * ay.rates[z];
        }
    }
    return out;
}

}  // namespace

TEST_CASE("backward rhs on a flat slice is the floor-rate running cost") {
    const ModelSpec m = decoupled_model();
    for (int n : {2, 4}) {
        const SimplexGrid g = SimplexGrid::enumerate(m.d, n - 1);
        const long long R = g.size();
        for (double level : {0.0, 3.25}) {
            const std::vector<double> slice(static_cast<std::size_t>(m.d) * R, level);
            const std::vector<double> rhs = hjb_rhs(m, n, slice);
            // All value gaps vanish, so every player sits at the floor rate:
            // rhs = c * a_lo^2 = 0.5 * 0.01 everywhere.
            for (double v : rhs) CHECK(v == doctest::Approx(0.005).epsilon(1e-14));
        }
    }
}

TEST_CASE("backward rhs matches a literal transcription on random slices") {
    ModelSpec m = coupled_model();
    m.b1 = {0.1, -0.2};
    rng::Stream s(21);
    for (int n : {2, 3, 5}) {
        const SimplexGrid g = SimplexGrid::enumerate(m.d, n - 1);
        const long long R = g.size();
        std::vector<double> slice(static_cast<std::size_t>(m.d) * R);
        for (std::size_t i = 0; i < slice.size(); ++i)
            slice[i] = 2.0 * (s.u01(1000ull * n + i) - 0.5);
        const std::vector<double> rhs = hjb_rhs(m, n, slice);
        for (int x = 0; x < m.d; ++x)
            for (long long r = 0; r < R; ++r)
                CHECK(rhs[static_cast<std::size_t>(x) * R + r] ==
                      doctest::Approx(rhs_oracle(m, n, g, slice, x, r)).epsilon(1e-12));
    }

    // Three states as well, to exercise y != z pairs across the full matrix.
    ModelSpec m3 = coupled_model();
    m3.d = 3;
    m3.b1 = {0.0, 0.1, 0.2};
    m3.c = {0.5, 1.0, 2.0};
    const int n = 3;
    const SimplexGrid g = SimplexGrid::enumerate(3, n - 1);
    const long long R = g.size();
    std::vector<double> slice(static_cast<std::size_t>(3) * R);
    for (std::size_t i = 0; i < slice.size(); ++i) slice[i] = 2.0 * (s.u01(777 + i) - 0.5);
    const std::vector<double> rhs = hjb_rhs(m3, n, slice);
    for (int x = 0; x < 3; ++x)
        for (long long r = 0; r < R; ++r)
            CHECK(rhs[static_cast<std::size_t>(x) * R + r] ==
                  doctest::Approx(rhs_oracle(m3, n, g, slice, x, r)).epsilon(1e-12));
}

TEST_CASE("decoupled game solves to the linear-in-time floor cost") {
    const ModelSpec m = decoupled_model();
    for (int n : {2, 5, 8}) {
        const ValueGrid v = solve_hjb_n(m, n, 1e-2);
        for (int k = 0; k <= v.K; ++k) {
            const double t = k * v.dt;
            const double want = (m.T - t) * 0.005;
            for (int x = 0; x < m.d; ++x)
                for (long long r = 0; r < v.grid.size(); ++r)
                    CHECK(v.value(k, x, r) == doctest::Approx(want).epsilon(1e-10));
        }
    }
}

TEST_CASE("terminal slice reproduces the terminal cost exactly") {
    const ModelSpec m = coupled_model();
    const int n = 4;
    const ValueGrid v = solve_hjb_n(m, n, 1e-2);
    for (int x = 0; x < m.d; ++x)
        for (long long r = 0; r < v.grid.size(); ++r)
            CHECK(v.value(v.K, x, r) == m.g_at(x, v.grid.unrank(r)));
}

TEST_CASE("value solve converges at fourth order in the step") {
    const ModelSpec m = coupled_model();
    const int n = 3;
    const ValueGrid ref = solve_hjb_n(m, n, 1.25e-3);
    const ValueGrid v1 = solve_hjb_n(m, n, 1e-2);
    const ValueGrid v2 = solve_hjb_n(m, n, 5e-3);
    // Errors against the 8x-finer reference at t = 0; the step ratio is 2,
    // so a 4th-order scheme shrinks the error 16x (the window allows the
    // reference's own truncation).
    double e1 = 0.0, e2 = 0.0;
    for (int x = 0; x < m.d; ++x)
        for (long long r = 0; r < ref.grid.size(); ++r) {
            e1 = std::max(e1, std::abs(v1.value(0, x, r) - ref.value(0, x, r)));
            e2 = std::max(e2, std::abs(v2.value(0, x, r) - ref.value(0, x, r)));
        }
    REQUIRE(e2 > 0.0);
    const double ratio = e1 / e2;
    CHECK(ratio >= 10.0);
    CHECK(ratio <= 22.0);
}

TEST_CASE("relabeling the two states relabels the value") {
    // The coupled example treats the states symmetrically (equal weights,
    // own-mass costs), so swapping labels and mirroring the measure is an
    // invariance of the solved grid.
    const ModelSpec m = coupled_model();
    const int n = 5;
    const ValueGrid v = solve_hjb_n(m, n, 5e-3);
    const SimplexGrid& g = v.grid;
    for (int k = 0; k <= v.K; k += 25)
        for (long long r = 0; r < g.size(); ++r) {
            std::vector<int> counts = g.unrank_counts(r);
            std::reverse(counts.begin(), counts.end());
            const long long rs = g.rank_counts(counts);
            CHECK(v.value(k, 0, r) == doctest::Approx(v.value(k, 1, rs)).epsilon(1e-9));
        }
}

TEST_CASE("solved values respect the comparison bound") {
    const ModelSpec m = coupled_model();
    const ValueGrid v = solve_hjb_n(m, 6, 1e-2);
    // max f1 = c * a_hi^2 (one destination), max f2 = max g = 1 on the simplex.
    const double bound = 1.0 + m.T * (0.5 * 100.0 + 1.0);
    for (double val : v.values) CHECK(std::abs(val) <= bound);
}

TEST_CASE("value-grid feedback is the floor rate in the decoupled game") {
    const ModelSpec m = decoupled_model();
    const int n = 4;
    const ValueGrid v = solve_hjb_n(m, n, 1e-2);
    for (double t : {0.0, 0.37, m.T}) {
        for (long long r = 0; r < v.grid.size(); ++r) {
            const Vec eta = v.grid.unrank(r);
            for (int x = 0; x < m.d; ++x) {
                const RateVector a = equilibrium_policy(v, t, x, eta);
                CHECK(a.base == x);
                for (int y = 0; y < m.d; ++y)
                    if (y != x) CHECK(a.rates[y] == doctest::Approx(0.1).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("value-grid CSV round trip is exact") {
    const ModelSpec m = coupled_model();
    const ValueGrid v = solve_hjb_n(m, 3, 0.05);
    std::stringstream buf;
    export_value_grid_csv(v, buf);
    const ValueGrid r = import_value_grid_csv(m, buf);
    CHECK(r.n == v.n);
    CHECK(r.K == v.K);
    CHECK(r.dt == doctest::Approx(v.dt).epsilon(1e-15));
    REQUIRE(r.values.size() == v.values.size());
    for (std::size_t i = 0; i < v.values.size(); ++i) CHECK(r.values[i] == v.values[i]);
}
