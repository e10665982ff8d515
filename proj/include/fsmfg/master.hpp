#pragma once
// The limiting-game layer: forward-backward characteristics, the master
// value U, its measure gradient, the master-PDE residual, and policy tables
// for simulation.
//
// For a start point (t0, mu0) the characteristic pair (u, mu) solves
//     d/dt mu(t)^T = mu(t)^T alpha(Delta_x u(t,.)),        mu(t0) = mu0,
//    -d/dt u(t,x)  = H1(x, Delta_x u(t,.)) + f2(x, mu(t)), u(T,x) = g(x, mu(T)),
// where alpha's rows are the closed-form optimal rates. The master value is
// U(t0, x, mu0) = u(t0, x). The system is solved by damped Picard iteration
// (freeze u, integrate mu forward; freeze mu, integrate u backward; relax),
// each leg with fixed-step RK4 and cubic interpolation of the frozen path so
// the integrator keeps its 4th order.
//
// The measure gradient K(t0, x, mu0) = grad_eta U comes from the linearized
// forward-backward pair along the converged characteristics:
//     d/dt m^T = m^T alpha(t) + mu(t)^T B(t; v),   m(t0) = m0,
//    -d/dt v(t,x) = sum_y alpha_xy(t) v(t,y) + grad_eta f2(x, mu(t)) . m(t),
//     v(T,x) = grad_eta g(x, mu(T)) . m(T),
// where B carries the sensitivity of the optimal rates to the adjoint,
// B_xz = (d a*_z / d p_z)(x, p(t)) * (v(t,z) - v(t,x)). The B-forcing matters:
// it is what makes v(t0, x) the actual directional derivative of U in m0
// (verified against finite differences; dropping it leaves a plain transport
// equation whose output is not the gradient). The envelope argument removes
// the corresponding term from the v-equation, which is why v sees only the
// transport by alpha plus the explicit measure-coupling of the costs.

#include <vector>

#include "fsmfg/model.hpp"
#include "fsmfg/simplex.hpp"

namespace mfg {

struct FBSolution {
    double t0 = 0.0, T = 0.0, dt = 0.0;
    int K = 0;                 // steps; K+1 knots, knot k at t0 + k*dt
    std::vector<Vec> u;        // per knot, length-d value slice
    std::vector<Vec> mu;       // per knot, measure
    int iterations = 0;
    double residual = 0.0;     // final fixed-point gap (sup norm)

    Vec u_at(double t) const;
    Vec mu_at(double t) const;
};

struct FBOptions {
    double dt = -1.0;          // target step; <= 0 means T/2000
    double tol = 1e-9;         // sup-norm fixed-point tolerance
    double damping = 0.5;      // relaxation weight on the new iterate, in (0, 1]
    int max_iter = 600;
    int forced_iterations = -1;  // > 0: run exactly this many sweeps (no tol stop)
    int forced_steps = -1;       // > 0: use exactly this many RK4 steps
    const FBSolution* warm = nullptr;  // optional initial u guess on the same knot grid
};

// Damped Picard solve of the forward-backward pair from (t0, mu0). Throws
// NonConvergence (carrying the last gap) if the iteration budget runs out —
// callers may retry with smaller damping — and DivergenceError if the
// forward leg drives a measure component below -1e-10 (step too coarse).
FBSolution solve_fb(const ModelSpec& model, double t0, const Vec& mu0, const FBOptions& opts = {});

// U(t0, x, eta) = u(t0, x) of the characteristic pair started at (t0, eta).
double master_U(const ModelSpec& model, double t0, int x, const Vec& eta, double dt = -1.0,
                double tol = 1e-9);

struct LinearizedSolution {
    double t0 = 0.0, dt = 0.0;
    int K = 0;
    std::vector<Vec> m;        // forward perturbation path
    std::vector<Vec> v;        // backward derivative path
    int iterations = 0;
    double residual = 0.0;
};

struct LinearizedOptions {
    double tol = 1e-12;
    // The alternating sweep of the linearized pair can oscillate-diverge on
    // full-horizon coupled models (its dominant eigenvalue is negative and
    // below -1), so the default relaxation is 0.5; the solver halves it
    // further on its own when it still sees divergence.
    double damping = 0.5;
    int max_iter = 300;
};

// Solves the linearized pair along a converged fb with initial perturbation
// m0 (any vector; gradients contract it against basis or tangent directions).
LinearizedSolution solve_linearized(const ModelSpec& model, const FBSolution& fb, const Vec& m0,
                                    const LinearizedOptions& opts = {});

// K(t0, x, eta): one characteristic solve plus d linearized solves with
// basis initial perturbations. Row convention: entry y is the derivative of
// U(t0, x, .) along e_y.
Vec grad_eta_U(const ModelSpec& model, double t0, int x, const Vec& eta, double dt = -1.0,
               double tol = 1e-9, double lin_tol = 1e-12);

// All states at once (row x = grad_eta U(t0, x, eta)); the building block of
// the residual and fluctuation coefficients.
std::vector<Vec> grad_eta_U_all(const ModelSpec& model, double t0, const Vec& eta,
                                double dt = -1.0, double tol = 1e-9, double lin_tol = 1e-12);

// Signed master-PDE residual
//   -dU/dt - sum_z (grad_eta U)_z * (sum_y eta_y a*_z(y, eta, Delta_y U)) - H(x, eta, Delta_x U)
// at (t, x, eta). The time derivative uses the symmetric 4th-order five-point
// stencil with half-width fd_step, all four offset solves forced to the
// center solve's iteration count and step count so fixed-point stopping
// noise cancels and truncation (fd^4 and dt^4, both 16x per halving)
// dominates a refinement study. Requires 2*fd_step <= min(t, T - t).
double master_residual(const ModelSpec& model, double t, int x, const Vec& eta,
                       double fd_step = 1e-4, double dt = -1.0, double tol = 1e-9);

// The measure flow from (0, mu0): the mu-component of the characteristic
// pair, returned with its evaluator.
FBSolution mfg_flow(const ModelSpec& model, const Vec& mu0, double dt = -1.0, double tol = 1e-9);

// Write a solved characteristic pair as CSV: one row per time step with
// columns t, mu_1..mu_d, u_1..u_d. Full double precision; a '#' header
// records t0, dt and the step count.
void export_fb_csv(const FBSolution& fb, std::ostream& out);

// U sampled on the simulation grid: U(t_k, x, eta_r) for knot times t_k and
// all points of the (n-1)-resolution grid, linearly interpolated in t. This
// is everything a master-policy simulation can ever ask for, at the cost of
// knots * grid solves (warm-started along the grid).
struct TableBuildOptions {
    int knots = 129;        // time knots including both endpoints
    double dt_fb = -1.0;    // characteristic-solve step; <= 0 means T/128
    double tol = 1e-8;
    double damping = 1.0;   // fall back to 0.5 automatically on non-convergence
    int jobs = 1;
};

class MasterPolicyTable {
public:
    using BuildOptions = TableBuildOptions;

    static MasterPolicyTable build(const ModelSpec& model, int n, const BuildOptions& opts = {});

    int n() const { return n_; }
    const SimplexGrid& grid() const { return grid_; }
    const ModelSpec& model() const { return model_; }

    double U(double t, int x, long long r) const;
    // Delta_x U(t, ., eta_r) into out (resized to d).
    void delta_x(double t, int x, long long r, Vec& out) const;
    // Knot spacing (policies are piecewise linear in t between knots).
    double knot_dt() const { return dt_; }

private:
    ModelSpec model_;
    int n_ = 0;
    SimplexGrid grid_;
    int Kt_ = 0;
    double dt_ = 0.0;
    std::vector<double> values_;  // [(k * d + x) * R + r]
};

}  // namespace mfg
