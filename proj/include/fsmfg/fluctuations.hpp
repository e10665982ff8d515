#pragma once
// The Gaussian fluctuation layer: sqrt(n) * (empirical measure - limit flow)
// converges to a linear SDE driven by two independent Brownian motions, one
// for arrivals and one for departures. This module evaluates the SDE's
// coefficients from the limit solution, integrates it by Euler-Maruyama, and
// produces the matching Monte-Carlo samples from the n-player simulator.
//
// Coefficients at (t, mu): with alpha*_{xz}(t, eta) the optimal rate from x
// to z under the limit value started at (t, eta),
//   lambda_x = sum_{y != x} mu_y alpha*_{yx}   (aggregate arrival intensity),
//   sigma_x  = mu_x sum_{y != x} alpha*_{xy}   (aggregate departure intensity),
// and the drift of psi is psi^T alpha* + mu^T (psi^T . grad_eta alpha*),
// the linearization of the measure flow's drift mu^T alpha*(t, mu) in mu.
// grad_eta alpha* is taken by central differences along the simplex tangent
// directions e_z - e_{d-1}; the returned ambient gradients use the gauge
// that the last coordinate's entry is zero (it absorbs the sum constraint),
// which contracts correctly against any tangent vector.
//
// Along the limit flow itself no extra solves are needed: the value path of
// the flow already evaluates alpha*(t, mu(t)) for every t (the flow property
// of the characteristics). Off-flow evaluations solve the limit system from
// the shifted start point.

#include <cstdint>
#include <utility>
#include <vector>

#include "fsmfg/master.hpp"
#include "fsmfg/model.hpp"
#include "fsmfg/simulate.hpp"

namespace mfg {

// alpha*(t, eta): full d x d optimal-rate matrix (diagonal = -row sum) under
// the limit value from (t, eta). One forward-backward solve per call.
std::vector<Vec> alpha_star(const ModelSpec& model, double t, const Vec& eta, double dt = -1.0,
                            double tol = 1e-9);

// (lambda, sigma) at (t, mu); see the header comment for the formulas.
std::pair<Vec, Vec> lambda_sigma(const ModelSpec& model, double t, const Vec& mu, double dt = -1.0,
                                 double tol = 1e-9);

// grad_eta alpha*_{xz}(t, mu): result[x][z] is the d-vector of ambient
// partials (last coordinate zero by gauge). Central differences with the
// given half-width; requires mu_z > fd_step for every z (interior point).
std::vector<std::vector<Vec>> grad_eta_alpha(const ModelSpec& model, double t, const Vec& mu,
                                             double fd_step = 1e-4, double dt = -1.0,
                                             double tol = 1e-9);

// SDE coefficients sampled on a uniform knot grid over [0, T] and linearly
// interpolated in t. Built once, shared by every path of a batch. Fields are
// public so tests can assemble frozen-coefficient instances directly.
struct SdeCoeffs {
    double dt = 0.0;  // knot spacing; knot j sits at j * dt
    int K = 0;        // knots - 1
    std::vector<Vec> mu;                          // limit flow at each knot
    std::vector<Vec> lambda, sigma;               // noise amplitudes
    std::vector<std::vector<Vec>> alpha;          // [j][x] -> rate row
    std::vector<std::vector<std::vector<Vec>>> grad;  // [j][x][z] -> d-vector

    // flow must start at t = 0; knots >= 2. fd_step <= 0 disables the
    // gradient term (grad filled with zeros), for models known to have
    // measure-independent policies.
    static SdeCoeffs build(const ModelSpec& model, const FBSolution& flow, int knots = 201,
                           double fd_step = 1e-4, double dt_fb = -1.0, double tol = 1e-9);
};

struct FluctuationPath {
    std::vector<double> times;  // K+1 points
    std::vector<Vec> psi;       // per time point
    // Brownian increments actually consumed, one per directed edge and step:
    // entry y*d + z of step k drives the (y -> z) mass-flow noise (diagonal 0).
    std::vector<Vec> dW;
};

struct SdeFlags {
    bool noise = true;
    bool drift = true;
};

// Euler-Maruyama on [0, coeffs' horizon] at step dt from psi(0) = psi0.
// The noise enters per directed edge: each ordered pair (y, z) carries an
// independent Brownian motion with amplitude sqrt(mu_y alpha_yz) whose
// increment is added to psi_z and subtracted from psi_y. That mirrors the
// prelimit structure -- the compensated (y -> z) jump counts are mutually
// orthogonal martingales with quadratic variation equal to the integrated
// flow rate -- and keeps sum_x psi_x = 0 exactly along every path. The
// per-component aggregates lambda, sigma in the coefficients are the
// resulting arrival/departure variance rates; the integrator derives the
// edge amplitudes from mu and alpha directly. Deterministic per seed.
FluctuationPath integrate_sde(const SdeCoeffs& coeffs, const Vec& psi0, double dt,
                              std::uint64_t seed, const SdeFlags& flags = {});

// Convenience one-shot: builds coefficients from the flow, then integrates.
FluctuationPath integrate_sde(const ModelSpec& model, const FBSolution& flow, const Vec& psi0,
                              double dt, std::uint64_t seed, int coeff_knots = 201,
                              double fd_step = 1e-4);

// M replications of sqrt(n) * (mu^n(T) - mu(T)) under the limit policy from
// a deterministic largest-remainder start (so the initial fluctuation is
// exactly zero: the limit flow is started from the rounded measure).
// Replication m uses an independent substream of seed.
std::vector<Vec> empirical_fluctuation(const ModelSpec& model, const MasterPolicyTable& table,
                                       int n, int M, const Vec& mu0, std::uint64_t seed,
                                       int jobs = 1, double flow_dt = -1.0);

}  // namespace mfg
