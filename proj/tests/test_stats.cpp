// Statistics toolkit checks against closed forms and known distributions.
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "fsmfg/common.hpp"
#include "fsmfg/stats.hpp"

using namespace mfg;
using rng::Stream;

TEST_CASE("moments and percentiles on small hand-computed sets") {
    const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
    CHECK(stats::mean(v) == doctest::Approx(2.5));
    CHECK(stats::sample_sd(v) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(stats::standard_error(v) == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(stats::percentile(v, 0.0) == doctest::Approx(1.0));
    CHECK(stats::percentile(v, 1.0) == doctest::Approx(4.0));
    CHECK(stats::percentile(v, 0.5) == doctest::Approx(2.5));  // interpolated
    CHECK(stats::percentile({7.0}, 0.3) == doctest::Approx(7.0));
}

TEST_CASE("regularized incomplete gamma matches its closed forms") {
    // Q(1, x) = exp(-x); Q(1/2, x) = erfc(sqrt(x))
    for (double x : {0.01, 0.5, 1.0, 2.0, 5.0, 20.0}) {
        CHECK(stats::gammq(1.0, x) == doctest::Approx(std::exp(-x)).epsilon(1e-12));
        CHECK(stats::gammq(0.5, x) == doctest::Approx(std::erfc(std::sqrt(x))).epsilon(1e-12));
    }
    CHECK(stats::gammq(3.0, 0.0) == doctest::Approx(1.0));
    // Q(2, x) = (1 + x) exp(-x), crossing the series/fraction switch at x = 3
    for (double x : {2.9, 3.1}) {
        CHECK(stats::gammq(2.0, x) == doctest::Approx((1.0 + x) * std::exp(-x)).epsilon(1e-12));
    }
}

TEST_CASE("KS test accepts the true exponential rate and rejects a wrong one") {
    Stream s{12345};
    std::vector<double> draws;
    for (int i = 0; i < 4000; ++i) draws.push_back(s.exponential(i, 2.0));
    const auto good = stats::ks_exponential(draws, 2.0);
    CHECK(good.p_value > 0.01);
    const auto bad = stats::ks_exponential(draws, 2.6);
    CHECK(bad.p_value < 1e-6);
    CHECK(bad.statistic > good.statistic);
}

TEST_CASE("chi-square accepts equal laws and rejects different Poisson means") {
    Stream s{777};
    auto poisson = [&s](double rate, std::uint64_t ctr) {
        // inversion by cumulative product of uniforms
        long long k = 0;
        double prod = s.u01(ctr * 104729 + k);
        const double floor_p = std::exp(-rate);
        while (prod > floor_p) {
            ++k;
            prod *= s.u01(ctr * 104729 + k);
        }
        return k;
    };
    std::vector<long long> a, b, c;
    for (int i = 0; i < 600; ++i) {
        a.push_back(poisson(3.0, 3 * i));
        b.push_back(poisson(3.0, 3 * i + 1));
        c.push_back(poisson(5.0, 3 * i + 2));
    }
    const auto same = stats::chi_square_counts(a, b);
    CHECK(same.dof >= 1);
    CHECK(same.p_value > 0.01);
    const auto diff = stats::chi_square_counts(a, c);
    CHECK(diff.p_value < 1e-6);
}

TEST_CASE("chi-square on identical degenerate samples is a vacuous pass") {
    const std::vector<long long> a(50, 4), b(50, 4);
    const auto r = stats::chi_square_counts(a, b);
    CHECK(r.dof == 0);
    CHECK(r.p_value == 1.0);
}

TEST_CASE("log-log slope recovers an exact power law") {
    std::vector<double> x, y;
    for (double v : {2.0, 4.0, 8.0, 32.0, 128.0}) {
        x.push_back(v);
        y.push_back(3.0 * std::pow(v, -1.5));
    }
    CHECK(stats::log_log_slope(x, y) == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK_THROWS_AS(stats::log_log_slope({1.0, -2.0}, {1.0, 1.0}), InvalidInput);
    CHECK_THROWS_AS(stats::log_log_slope({1.0, 2.0}, {1.0, 0.0}), InvalidInput);
    CHECK_THROWS_AS(stats::log_log_slope({1.0}, {1.0}), InvalidInput);
}

TEST_CASE("stream draws are reproducible and well distributed") {
    Stream a{42}, b{42}, c{43};
    CHECK(a.u01(7) == b.u01(7));
    CHECK(a.u01(7) != c.u01(7));
    // forked streams decorrelate from the parent
    Stream f = a.fork(1);
    CHECK(f.u01(7) != a.u01(7));
    std::vector<double> u;
    for (int i = 0; i < 20000; ++i) u.push_back(a.u01(i));
    CHECK(std::abs(stats::mean(u) - 0.5) <= 4.0 * stats::standard_error(u));
    for (double w : u) {
        CHECK(w >= 0.0);
        CHECK(w < 1.0);
    }
    // Box-Muller normals: two independent draws per counter pair
    std::vector<double> z;
    for (int i = 0; i < 20000; ++i) z.push_back(a.normal(i));
    CHECK(std::abs(stats::mean(z)) <= 4.0 * stats::standard_error(z));
    CHECK(stats::sample_sd(z) == doctest::Approx(1.0).epsilon(0.05));
}
