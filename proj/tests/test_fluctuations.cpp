// The fluctuation layer: SDE coefficients read off the limit solution, the
// Euler-Maruyama integrator, and the Monte-Carlo samples it must match.
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "fsmfg/fluctuations.hpp"
#include "fsmfg/stats.hpp"

using namespace mfg;

namespace {

ModelSpec decoupled_model(double T = 1.0) {
    ModelSpec m;
    m.d = 2;
    m.T = T;
    m.b1 = {0.0, 0.0};
    m.c = {0.5, 0.5};
    return m;  // zero cost families: the policy ignores the measure
}

ModelSpec coupled_model(double T = 1.0, double scale = 1.0) {
    ModelSpec m = decoupled_model(T);
    m.a_hi = 2.0;
    m.f2 = {CostFamily::Linear, scale};
    m.g = {CostFamily::Linear, scale};
    return m;
}

// Frozen-coefficient container over [0, K * dt] with everything zeroed.
SdeCoeffs zero_coeffs(int d, int K, double dt) {
    SdeCoeffs c;
    c.dt = dt;
    c.K = K;
    c.mu.assign(K + 1, Vec(d, 1.0 / d));
    c.lambda.assign(K + 1, Vec(d, 0.0));
    c.sigma.assign(K + 1, Vec(d, 0.0));
    c.alpha.assign(K + 1, std::vector<Vec>(d, Vec(d, 0.0)));
    c.grad.assign(K + 1, std::vector<std::vector<Vec>>(d, std::vector<Vec>(d, Vec(d, 0.0))));
    return c;
}

double max_abs_grad(const std::vector<std::vector<Vec>>& g) {
    double m = 0.0;
    for (const auto& row : g)
        for (const Vec& entry : row)
            for (double w : entry) m = std::max(m, std::abs(w));
    return m;
}

}  // namespace

TEST_CASE("aggregate intensities at the floor-rate policy") {
    const ModelSpec m = decoupled_model();
    // equal control weights: the optimal rate is the floor a_lo everywhere
    const auto [lam_u, sig_u] = lambda_sigma(m, 0.3, Vec{0.5, 0.5});
    CHECK(lam_u[0] == 0.5 * m.a_lo);
    CHECK(lam_u[1] == 0.5 * m.a_lo);
    CHECK(sig_u[0] == 0.5 * m.a_lo);
    CHECK(sig_u[1] == 0.5 * m.a_lo);
    // all mass at state 0: arrivals only into 1, departures only from 0
    const auto [lam_c, sig_c] = lambda_sigma(m, 0.3, Vec{1.0, 0.0});
    CHECK(lam_c[0] == 0.0);
    CHECK(lam_c[1] == m.a_lo);
    CHECK(sig_c[0] == m.a_lo);
    CHECK(sig_c[1] == 0.0);
}

TEST_CASE("total arrival and departure intensities balance") {
    const ModelSpec m = coupled_model();
    for (const Vec& mu : {Vec{0.5, 0.5}, Vec{0.3, 0.7}, Vec{0.85, 0.15}}) {
        const auto [lam, sig] = lambda_sigma(m, 0.2, mu);
        double dl = 0.0, ds = 0.0;
        for (double v : lam) dl += v;
        for (double v : sig) ds += v;
        CHECK(std::abs(dl - ds) <= 1e-12);
        for (int x = 0; x < m.d; ++x) {
            CHECK(lam[x] >= 0.0);
            CHECK(sig[x] >= 0.0);
        }
    }
}

TEST_CASE("a measure-blind policy has an exactly zero rate gradient") {
    const ModelSpec m = decoupled_model();
    const auto g = grad_eta_alpha(m, 0.3, Vec{0.4, 0.6});
    CHECK(max_abs_grad(g) == 0.0);
}

TEST_CASE("rate gradients converge at second order in the step") {
    // Central differences: halving the half-width shrinks the error 4x.
    // At mu = (0.3, 0.7) the 1 -> 0 rate is strictly inside the box, so the
    // difference quotient tracks a smooth function of the measure.
    const ModelSpec m = coupled_model();
    const double t = 0.3;
    const Vec mu = {0.3, 0.7};
    const auto ref = grad_eta_alpha(m, t, mu, 2.5e-3, -1.0, 1e-11);
    auto err = [&](double h) {
        const auto g = grad_eta_alpha(m, t, mu, h, -1.0, 1e-11);
        double e = 0.0;
        for (int x = 0; x < m.d; ++x)
            for (int z = 0; z < m.d; ++z)
                for (int w = 0; w < m.d; ++w)
                    e = std::max(e, std::abs(g[x][z][w] - ref[x][z][w]));
        return e;
    };
    const double e1 = err(2e-2);
    const double e2 = err(1e-2);
    INFO("errors " << e1 << " " << e2 << " ratio " << e1 / e2);
    REQUIRE(e2 > 0.0);
    CHECK(e1 / e2 >= 2.5);
    CHECK(e1 / e2 <= 6.0);
}

TEST_CASE("rate gradients refuse measures too close to the boundary") {
    const ModelSpec m = coupled_model();
    CHECK_THROWS_AS(grad_eta_alpha(m, 0.3, Vec{5e-5, 1.0 - 5e-5}, 1e-4), InvalidInput);
}

TEST_CASE("all-zero coefficients freeze the path at its start") {
    const SdeCoeffs c = zero_coeffs(2, 4, 0.25);
    const Vec psi0 = {0.7, -0.7};
    const FluctuationPath p = integrate_sde(c, psi0, 0.1, 5);
    REQUIRE(!p.times.empty());
    CHECK(p.times.front() == 0.0);
    CHECK(p.times.back() == doctest::Approx(1.0));
    for (const Vec& psi : p.psi) {
        CHECK(psi[0] == 0.7);
        CHECK(psi[1] == -0.7);
    }
}

TEST_CASE("the drift is linear: zero stays zero and doubling scales the path") {
    const ModelSpec m = coupled_model(0.5);
    const FBSolution flow = solve_fb(m, 0.0, Vec{0.4, 0.6});
    const SdeCoeffs c = SdeCoeffs::build(m, flow, 41, 1e-3);
    SdeFlags drift_only;
    drift_only.noise = false;

    const FluctuationPath z = integrate_sde(c, Vec{0.0, 0.0}, 1e-3, 1, drift_only);
    for (const Vec& psi : z.psi)
        for (double w : psi) CHECK(w == 0.0);

    const FluctuationPath one = integrate_sde(c, Vec{0.3, -0.3}, 1e-3, 1, drift_only);
    const FluctuationPath two = integrate_sde(c, Vec{0.6, -0.6}, 1e-3, 1, drift_only);
    REQUIRE(one.psi.size() == two.psi.size());
    CHECK(one.psi.front() == Vec{0.3, -0.3});
    for (std::size_t k = 0; k < one.psi.size(); ++k)
        for (int x = 0; x < 2; ++x) {
            CHECK(std::isfinite(one.psi[k][x]));
            CHECK(two.psi[k][x] == 2.0 * one.psi[k][x]);
        }
}

TEST_CASE("noise-only integration reproduces the martingale variance") {
    // One Brownian motion per directed edge with amplitude sqrt(mu_y a_yz):
    // with constant mu and rates and the drift off, psi(T) is exactly
    // Gaussian with per-component variance (Gamma_01 + Gamma_10) T at d = 2,
    // matching the quadratic variation of the compensated flow counts, and
    // the two components are exact mirror images (the noise is tangent).
    SdeCoeffs c = zero_coeffs(2, 4, 0.25);
    const double a01 = 1.2, a10 = 0.6;
    for (int j = 0; j <= c.K; ++j) {
        c.mu[j] = {0.5, 0.5};
        c.alpha[j][0][1] = a01;
        c.alpha[j][1][0] = a10;
    }
    const double rate = 0.5 * a01 + 0.5 * a10;  // Gamma_01 + Gamma_10
    SdeFlags noise_only;
    noise_only.drift = false;
    const int M = 10000;
    std::vector<double> end0;
    for (int rep = 0; rep < M; ++rep) {
        const FluctuationPath p = integrate_sde(c, Vec{0.0, 0.0}, 1e-2, 1000 + rep, noise_only);
        for (const Vec& psi : p.psi) CHECK(psi[1] == -psi[0]);
        end0.push_back(p.psi.back()[0]);
    }
    const double sd0 = stats::sample_sd(end0);
    const double var_tol = 3.0 * std::sqrt(2.0 / M);  // relative, chi-square CLT
    CHECK(std::abs(sd0 * sd0 - rate) <= var_tol * rate);
    CHECK(std::abs(stats::mean(end0)) <= 4.0 * stats::standard_error(end0));
}

TEST_CASE("paths are reproducible per seed and distinct across seeds") {
    const ModelSpec m = coupled_model(0.5);
    const FBSolution flow = solve_fb(m, 0.0, Vec{0.5, 0.5});
    const SdeCoeffs c = SdeCoeffs::build(m, flow, 21, 1e-3);
    const FluctuationPath a = integrate_sde(c, Vec{0.1, -0.1}, 1e-3, 7);
    const FluctuationPath b = integrate_sde(c, Vec{0.1, -0.1}, 1e-3, 7);
    const FluctuationPath d = integrate_sde(c, Vec{0.1, -0.1}, 1e-3, 8);
    REQUIRE(a.psi.size() == b.psi.size());
    for (std::size_t k = 0; k < a.psi.size(); ++k) CHECK(a.psi[k] == b.psi[k]);
    CHECK(a.psi.back() != d.psi.back());
}

TEST_CASE("coefficient table honors the gradient switch and the flow") {
    const ModelSpec m = coupled_model(0.5);
    const FBSolution flow = solve_fb(m, 0.0, Vec{0.4, 0.6});
    const SdeCoeffs c = SdeCoeffs::build(m, flow, 21, -1.0);  // gradient off
    CHECK(c.K == 20);
    CHECK(c.dt == doctest::Approx(0.5 / 20));
    for (int j = 0; j <= c.K; ++j) {
        CHECK(max_abs_grad(c.grad[j]) == 0.0);
        double mass = 0.0;
        for (double w : c.mu[j]) mass += w;
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(c.mu[0][0] == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("empirical fluctuation samples are centered tangent vectors") {
    const ModelSpec m = coupled_model(0.5);
    TableBuildOptions topts;
    topts.knots = 17;
    const int n = 32, M = 200;
    const MasterPolicyTable table = MasterPolicyTable::build(m, n, topts);
    const std::vector<Vec> samples = empirical_fluctuation(m, table, n, M, Vec{0.5, 0.5}, 99);
    REQUIRE(static_cast<int>(samples.size()) == M);
    std::vector<double> comp0;
    for (const Vec& s : samples) {
        CHECK(std::abs(s[0] + s[1]) <= 1e-12);  // both measures sum to one
        comp0.push_back(s[0]);
    }
    // centered start (exact rounding at n = 32): the mean stays near zero
    CHECK(std::abs(stats::mean(comp0)) <= 4.0 * stats::standard_error(comp0));
}

TEST_CASE("fluctuation magnitudes approach the SDE law as n grows") {
    const ModelSpec m = coupled_model(0.5);
    const Vec mu0 = {0.5, 0.5};

    // SDE reference sample of |psi_0(T)|
    const FBSolution flow = solve_fb(m, 0.0, mu0);
    const SdeCoeffs c = SdeCoeffs::build(m, flow, 21, 1e-3);
    std::vector<double> sde_abs;
    for (int rep = 0; rep < 400; ++rep) {
        const FluctuationPath p = integrate_sde(c, Vec{0.0, 0.0}, 1e-3, 5000 + rep);
        sde_abs.push_back(std::abs(p.psi.back()[0]));
    }
    const double ref80 = stats::percentile(sde_abs, 0.8);
    REQUIRE(ref80 > 0.0);

    TableBuildOptions topts;
    topts.knots = 17;
    for (int n : {64, 128, 256}) {
        const MasterPolicyTable table = MasterPolicyTable::build(m, n, topts);
        const std::vector<Vec> samples = empirical_fluctuation(m, table, n, 100, mu0, 17);
        std::vector<double> emp_abs;
        for (const Vec& s : samples) emp_abs.push_back(std::abs(s[0]));
        const double ratio = stats::percentile(emp_abs, 0.8) / ref80;
        INFO("n " << n << " percentile ratio " << ratio);
        CHECK(ratio > 1.0 / 1.5);
        CHECK(ratio < 1.5);
    }
}
