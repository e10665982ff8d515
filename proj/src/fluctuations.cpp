#include "fsmfg/fluctuations.hpp"

#include <algorithm>
#include <cmath>

namespace mfg {

namespace {

constexpr std::uint64_t kNoiseFork = 0x4231;
constexpr std::uint64_t kRepFork = 0x726570;

std::vector<Vec> alpha_from_values(const ModelSpec& model, const Vec& u) {
    const int d = model.d;
    std::vector<Vec> rows(d);
    Vec p(d);
    for (int x = 0; x < d; ++x) {
        for (int l = 0; l < d; ++l) p[l] = u[l] - u[x];
        rows[x] = optimal_rates(model, x, p).rates;
    }
    return rows;
}

void lambda_sigma_from(const std::vector<Vec>& alpha, const Vec& mu, Vec& lambda, Vec& sigma) {
    const int d = static_cast<int>(mu.size());
    lambda.assign(d, 0.0);
    sigma.assign(d, 0.0);
    for (int x = 0; x < d; ++x) {
        double row = 0.0;
        for (int z = 0; z < d; ++z) {
            if (z == x) continue;
            lambda[z] += mu[x] * alpha[x][z];
            row += alpha[x][z];
        }
        sigma[x] = mu[x] * row;
    }
}

// linear interpolation weight for a knot grid: index j and fraction w
void knot_weight(double t, double dt, int K, int& j, double& w) {
    double s = t / dt;
    if (s < 0) s = 0;
    if (s > K) s = K;
    j = static_cast<int>(s);
    if (j >= K) j = K - 1;
    w = s - j;
}

}  // namespace

std::vector<Vec> alpha_star(const ModelSpec& model, double t, const Vec& eta, double dt,
                            double tol) {
    FBOptions opts;
    opts.dt = dt;
    opts.tol = tol;
    const FBSolution fb = solve_fb(model, t, eta, opts);
    return alpha_from_values(model, fb.u[0]);
}

std::pair<Vec, Vec> lambda_sigma(const ModelSpec& model, double t, const Vec& mu, double dt,
                                 double tol) {
    const std::vector<Vec> alpha = alpha_star(model, t, mu, dt, tol);
    Vec lambda, sigma;
    lambda_sigma_from(alpha, mu, lambda, sigma);
    return {lambda, sigma};
}

std::vector<std::vector<Vec>> grad_eta_alpha(const ModelSpec& model, double t, const Vec& mu,
                                             double fd_step, double dt, double tol) {
    const int d = model.d;
    if (!(fd_step > 0)) throw InvalidInput("grad_eta_alpha: fd_step must be > 0");
    for (double w : mu)
        if (w <= fd_step)
            throw InvalidInput("grad_eta_alpha: measure must be interior (components > fd_step)");
    std::vector<std::vector<Vec>> grad(d, std::vector<Vec>(d, Vec(d, 0.0)));
    Vec shifted = mu;
    for (int w = 0; w < d - 1; ++w) {
        // tangent direction e_w - e_{d-1}
        shifted = mu;
        shifted[w] += fd_step;
        shifted[d - 1] -= fd_step;
        const std::vector<Vec> plus = alpha_star(model, t, shifted, dt, tol);
        shifted = mu;
        shifted[w] -= fd_step;
        shifted[d - 1] += fd_step;
        const std::vector<Vec> minus = alpha_star(model, t, shifted, dt, tol);
        for (int x = 0; x < d; ++x)
            for (int z = 0; z < d; ++z)
                grad[x][z][w] = (plus[x][z] - minus[x][z]) / (2.0 * fd_step);
    }
    return grad;
}

SdeCoeffs SdeCoeffs::build(const ModelSpec& model, const FBSolution& flow, int knots,
                           double fd_step, double dt_fb, double tol) {
    if (knots < 2) throw InvalidInput("SdeCoeffs: need at least 2 knots");
    if (std::abs(flow.t0) > 1e-12) throw InvalidInput("SdeCoeffs: flow must start at t = 0");
    const int d = model.d;
    SdeCoeffs c;
    c.K = knots - 1;
    c.dt = model.T / c.K;
    c.mu.resize(knots);
    c.lambda.resize(knots);
    c.sigma.resize(knots);
    c.alpha.resize(knots);
    c.grad.assign(knots, std::vector<std::vector<Vec>>(d, std::vector<Vec>(d, Vec(d, 0.0))));
    for (int j = 0; j < knots; ++j) {
        const double t = j * c.dt;
        c.mu[j] = flow.mu_at(t);
        c.alpha[j] = alpha_from_values(model, flow.u_at(t));
        lambda_sigma_from(c.alpha[j], c.mu[j], c.lambda[j], c.sigma[j]);
        if (fd_step > 0) c.grad[j] = grad_eta_alpha(model, t, c.mu[j], fd_step, dt_fb, tol);
    }
    return c;
}

FluctuationPath integrate_sde(const SdeCoeffs& coeffs, const Vec& psi0, double dt,
                              std::uint64_t seed, const SdeFlags& flags) {
    if (!(dt > 0)) throw InvalidInput("integrate_sde: dt must be > 0");
    const int d = static_cast<int>(psi0.size());
    const double T = coeffs.K * coeffs.dt;
    const int steps = std::max(1, static_cast<int>(std::llround(T / dt)));
    const double h = T / steps;
    const double rooth = std::sqrt(h);

    rng::Stream root(seed);
    const rng::Stream bm = root.fork(kNoiseFork);

    FluctuationPath path;
    path.times.reserve(steps + 1);
    path.psi.reserve(steps + 1);
    path.times.push_back(0.0);
    path.psi.push_back(psi0);

    Vec psi = psi0, drift(d), mu_t(d), noise(d), alpha_t(d * d), dw(d * d);
    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        int j;
        double w;
        knot_weight(t, coeffs.dt, coeffs.K, j, w);
        for (int x = 0; x < d; ++x) {
            mu_t[x] = (1 - w) * coeffs.mu[j][x] + w * coeffs.mu[j + 1][x];
            for (int z = 0; z < d; ++z)
                alpha_t[x * d + z] =
                    (1 - w) * coeffs.alpha[j][x][z] + w * coeffs.alpha[j + 1][x][z];
        }
        std::fill(drift.begin(), drift.end(), 0.0);
        if (flags.drift) {
            for (int z = 0; z < d; ++z) {
                double s = 0.0;
                for (int x = 0; x < d; ++x) {
                    s += psi[x] * alpha_t[x * d + z];
                    double inner = 0.0;
                    for (int q = 0; q < d; ++q)
                        inner += psi[q] * ((1 - w) * coeffs.grad[j][x][z][q] +
                                           w * coeffs.grad[j + 1][x][z][q]);
                    s += mu_t[x] * inner;
                }
                drift[z] = s;
            }
        }
        // One independent Brownian motion per directed edge (y, z): the
        // compensated prelimit jump counts are orthogonal across edges, each
        // with quadratic variation equal to the integrated flow rate
        // mu_y alpha_yz. Crediting z and debiting y with the same increment
        // keeps sum_x psi_x conserved exactly along every path.
        std::fill(noise.begin(), noise.end(), 0.0);
        std::fill(dw.begin(), dw.end(), 0.0);
        if (flags.noise) {
            for (int y = 0; y < d; ++y) {
                for (int z = 0; z < d; ++z) {
                    if (z == y) continue;
                    const std::uint64_t ctr = (static_cast<std::uint64_t>(k) * d + y) * d + z;
                    const double incr = rooth * bm.normal(ctr);
                    dw[y * d + z] = incr;
                    const double amp = std::sqrt(std::max(mu_t[y] * alpha_t[y * d + z], 0.0));
                    noise[z] += amp * incr;
                    noise[y] -= amp * incr;
                }
            }
        }
        for (int x = 0; x < d; ++x) {
            psi[x] += drift[x] * h + noise[x];
            if (!std::isfinite(psi[x]))
                throw DivergenceError("integrate_sde: non-finite fluctuation component");
        }
        path.dW.push_back(dw);
        path.times.push_back((k + 1) * h);
        path.psi.push_back(psi);
    }
    return path;
}

FluctuationPath integrate_sde(const ModelSpec& model, const FBSolution& flow, const Vec& psi0,
                              double dt, std::uint64_t seed, int coeff_knots, double fd_step) {
    return integrate_sde(SdeCoeffs::build(model, flow, coeff_knots, fd_step), psi0, dt, seed);
}

std::vector<Vec> empirical_fluctuation(const ModelSpec& model, const MasterPolicyTable& table,
                                       int n, int M, const Vec& mu0, std::uint64_t seed, int jobs,
                                       double flow_dt) {
    if (table.n() != n) throw InvalidInput("empirical_fluctuation: table resolution != n");
    if (M < 1) throw InvalidInput("empirical_fluctuation: need M >= 1 replications");
    const int d = model.d;

    const std::vector<int> init = initial_states(n, mu0, InitMode::Deterministic);
    std::vector<int> counts(d, 0);
    for (int s : init) ++counts[s];
    Vec mu_start(d);
    for (int x = 0; x < d; ++x) mu_start[x] = static_cast<double>(counts[x]) / n;

    const FBSolution flow = mfg_flow(model, mu_start, flow_dt);
    const Vec muT = flow.mu.back();

    const rng::Stream reps = rng::Stream(seed).fork(kRepFork);
    const PolicySpec policy = PolicySpec::master(table);
    std::vector<Vec> samples(M);
    parallel_for(static_cast<std::size_t>(M), jobs, [&](std::size_t m) {
        const TrajectoryRecord rec =
            simulate(model, n, policy, init, reps.bits(static_cast<std::uint64_t>(m)));
        const std::vector<int>& final_counts = rec.mu_counts.back();
        Vec s(d);
        const double root_n = std::sqrt(static_cast<double>(n));
        for (int x = 0; x < d; ++x)
            s[x] = root_n * (static_cast<double>(final_counts[x]) / n - muT[x]);
        samples[m] = std::move(s);
    });
    return samples;
}

}  // namespace mfg
