#include "fsmfg/master.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfg {

namespace {

// Optimal-rate matrix for a value slice: row x holds a*(x, Delta_x u); the
// diagonal is minus the row sum, so mu^T alpha is the measure drift.
void rate_matrix(const ModelSpec& model, const Vec& u, std::vector<double>& alpha) {
    const int d = model.d;
    alpha.resize(static_cast<std::size_t>(d) * d);
    for (int x = 0; x < d; ++x) {
        double row = 0.0;
        for (int z = 0; z < d; ++z) {
            if (z == x) continue;
            const double p = u[z] - u[x];
            const double a = std::clamp(-p / (2.0 * model.c[z]), model.a_lo, model.a_hi);
            alpha[static_cast<std::size_t>(x) * d + z] = a;
            row += a;
        }
        alpha[static_cast<std::size_t>(x) * d + x] = -row;
    }
}

// Sensitivity of the clamped minimizer to its adjoint coordinate: the
// unconstrained slope inside the box, zero where the clamp is active.
double rate_slope(const ModelSpec& model, double p, int z) {
    const double raw = -p / (2.0 * model.c[z]);
    return (raw > model.a_lo && raw < model.a_hi) ? -1.0 / (2.0 * model.c[z]) : 0.0;
}

void check_simplex_point(const ModelSpec& model, const Vec& mu0, const char* who) {
    if (static_cast<int>(mu0.size()) != model.d)
        throw InvalidInput(std::string(who) + ": measure has wrong dimension");
    double sum = 0.0;
    for (double w : mu0) {
        if (w < -1e-12) throw InvalidInput(std::string(who) + ": measure has a negative component");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw InvalidInput(std::string(who) + ": measure components must sum to 1");
}

// One forward sweep: integrate the measure ODE along a frozen value path.
// Clips sub-1e-10 undershoots to the simplex; larger undershoot means the
// step cannot resolve the flow and is an error.
void integrate_mu_forward(const ModelSpec& model, double t0, double dt, int K,
                          const std::vector<Vec>& u_path, const Vec& mu0,
                          std::vector<Vec>& mu_path) {
    const int d = model.d;
    mu_path.assign(K + 1, Vec(d));
    mu_path[0] = mu0;
    Vec u_stage(d), k1(d), k2(d), k3(d), k4(d), tmp(d);
    std::vector<double> alpha;
    auto drift = [&](double t, const Vec& mu, Vec& out) {
        eval_path(u_path, t0, dt, t, u_stage);
        rate_matrix(model, u_stage, alpha);
        for (int z = 0; z < d; ++z) {
            double s = 0.0;
            for (int x = 0; x < d; ++x) s += mu[x] * alpha[static_cast<std::size_t>(x) * d + z];
            out[z] = s;
        }
    };
    for (int k = 0; k < K; ++k) {
        const double t = t0 + k * dt;
        const Vec& mu = mu_path[k];
        drift(t, mu, k1);
        for (int j = 0; j < d; ++j) tmp[j] = mu[j] + 0.5 * dt * k1[j];
        drift(t + 0.5 * dt, tmp, k2);
        for (int j = 0; j < d; ++j) tmp[j] = mu[j] + 0.5 * dt * k2[j];
        drift(t + 0.5 * dt, tmp, k3);
        for (int j = 0; j < d; ++j) tmp[j] = mu[j] + dt * k3[j];
        drift(t + dt, tmp, k4);
        Vec& next = mu_path[k + 1];
        double sum = 0.0;
        for (int j = 0; j < d; ++j) {
            next[j] = mu[j] + dt / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
            if (next[j] < 0) {
                if (next[j] < -1e-10)
                    throw DivergenceError("measure flow undershot the simplex; reduce dt");
                next[j] = 0.0;
            }
            sum += next[j];
        }
        for (int j = 0; j < d; ++j) next[j] /= sum;
    }
}

// One backward sweep: integrate the value ODE along a frozen measure path,
// terminal data from the frozen mu(T).
void integrate_u_backward(const ModelSpec& model, double t0, double dt, int K,
                          const std::vector<Vec>& mu_path, std::vector<Vec>& u_path) {
    const int d = model.d;
    u_path.assign(K + 1, Vec(d));
    for (int x = 0; x < d; ++x) u_path[K][x] = model.g_at(x, mu_path[K]);
    Vec mu_stage(d), k1(d), k2(d), k3(d), k4(d), tmp(d), p(d);
    auto rhs = [&](double t, const Vec& u, Vec& out) {
        eval_path(mu_path, t0, dt, t, mu_stage);
        for (int x = 0; x < d; ++x) {
            for (int l = 0; l < d; ++l) p[l] = u[l] - u[x];
            out[x] = -(hamiltonian_H1(model, x, p) + model.f2_at(x, mu_stage));
        }
    };
    const double h = -dt;
    for (int k = K; k > 0; --k) {
        const double t = t0 + k * dt;
        const Vec& u = u_path[k];
        rhs(t, u, k1);
        for (int j = 0; j < d; ++j) tmp[j] = u[j] + 0.5 * h * k1[j];
        rhs(t + 0.5 * h, tmp, k2);
        for (int j = 0; j < d; ++j) tmp[j] = u[j] + 0.5 * h * k2[j];
        rhs(t + 0.5 * h, tmp, k3);
        for (int j = 0; j < d; ++j) tmp[j] = u[j] + h * k3[j];
        rhs(t + h, tmp, k4);
        Vec& prev = u_path[k - 1];
        for (int j = 0; j < d; ++j)
            prev[j] = u[j] + h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
    }
}

}  // namespace

Vec FBSolution::u_at(double t) const {
    Vec out;
    eval_path(u, t0, dt > 0 ? dt : 1.0, t, out);
    return out;
}

Vec FBSolution::mu_at(double t) const {
    Vec out;
    eval_path(mu, t0, dt > 0 ? dt : 1.0, t, out);
    return out;
}

FBSolution solve_fb(const ModelSpec& model, double t0, const Vec& mu0, const FBOptions& opts) {
    model.check();
    check_simplex_point(model, mu0, "solve_fb");
    if (t0 < -1e-12 || t0 > model.T + 1e-12) throw InvalidInput("solve_fb: t0 outside [0, T]");
    if (!(opts.tol > 0)) throw InvalidInput("solve_fb: tol must be > 0");
    if (!(opts.damping > 0) || opts.damping > 1.0)
        throw InvalidInput("solve_fb: damping must lie in (0, 1]");

    FBSolution fb;
    fb.t0 = t0;
    fb.T = model.T;
    const double span = model.T - t0;
    const int d = model.d;

    if (span <= 1e-12 * std::max(1.0, model.T)) {
        // empty horizon: the value is the terminal cost at the start measure
        fb.K = 0;
        fb.dt = 0.0;
        fb.mu = {mu0};
        fb.u = {Vec(d)};
        for (int x = 0; x < d; ++x) fb.u[0][x] = model.g_at(x, mu0);
        fb.iterations = 1;
        fb.residual = 0.0;
        return fb;
    }

    const double dt_target = opts.dt > 0 ? opts.dt : model.T / 2000.0;
    fb.K = opts.forced_steps > 0 ? opts.forced_steps
                                 : std::max(1, static_cast<int>(std::llround(span / dt_target)));
    fb.dt = span / fb.K;

    if (opts.warm && static_cast<int>(opts.warm->u.size()) == fb.K + 1) {
        fb.u = opts.warm->u;
    } else {
        fb.u.assign(fb.K + 1, Vec(d, 0.0));
    }

    std::vector<Vec> u_new;
    double gap = 0.0;
    const int budget = opts.forced_iterations > 0 ? opts.forced_iterations : opts.max_iter;
    bool converged = false;
    int it = 0;
    for (it = 1; it <= budget; ++it) {
        integrate_mu_forward(model, t0, fb.dt, fb.K, fb.u, mu0, fb.mu);
        integrate_u_backward(model, t0, fb.dt, fb.K, fb.mu, u_new);
        gap = sup_diff(u_new, fb.u);
        for (int k = 0; k <= fb.K; ++k)
            for (int j = 0; j < d; ++j)
                fb.u[k][j] = (1.0 - opts.damping) * fb.u[k][j] + opts.damping * u_new[k][j];
        if (opts.forced_iterations > 0) {
            if (it == opts.forced_iterations) {
                converged = true;
                break;
            }
        } else if (gap < opts.tol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        std::ostringstream os;
        os << "solve_fb: no fixed point within " << budget << " sweeps (gap " << gap
           << "); consider smaller damping";
        throw NonConvergence(os.str(), gap, budget);
    }
    // re-run the forward leg so the returned pair is consistent with the
    // final value path
    integrate_mu_forward(model, t0, fb.dt, fb.K, fb.u, mu0, fb.mu);
    fb.iterations = it;
    fb.residual = gap;
    return fb;
}

double master_U(const ModelSpec& model, double t0, int x, const Vec& eta, double dt, double tol) {
    if (x < 0 || x >= model.d) throw InvalidInput("master_U: state out of range");
    FBOptions opts;
    opts.dt = dt;
    opts.tol = tol;
    return solve_fb(model, t0, eta, opts).u[0][x];
}

LinearizedSolution solve_linearized(const ModelSpec& model, const FBSolution& fb, const Vec& m0,
                                    const LinearizedOptions& opts) {
    if (static_cast<int>(m0.size()) != model.d)
        throw InvalidInput("solve_linearized: m0 has wrong dimension");
    const int d = model.d;
    LinearizedSolution lin;
    lin.t0 = fb.t0;
    lin.dt = fb.dt;
    lin.K = fb.K;

    if (fb.K == 0) {
        lin.m = {m0};
        lin.v = {Vec(d)};
        const Vec& muT = fb.mu[0];
        for (int x = 0; x < d; ++x) {
            const Vec gg = model.grad_g(x, muT);
            double acc = 0.0;
            for (int y = 0; y < d; ++y) acc += gg[y] * m0[y];
            lin.v[0][x] = acc;
        }
        lin.iterations = 1;
        return lin;
    }

    const int K = fb.K;
    const double dt = fb.dt, t0 = fb.t0;
    lin.v.assign(K + 1, Vec(d, 0.0));
    lin.m.assign(K + 1, Vec(d, 0.0));

    Vec u_stage(d), v_stage(d), m_stage(d), mu_stage(d);
    std::vector<double> alpha;
    Vec k1(d), k2(d), k3(d), k4(d), tmp(d), p(d);
    std::vector<Vec> m_new, v_new;

    // forward drift of the perturbation: transport by alpha plus the
    // policy-sensitivity forcing mu^T B(v)
    auto m_drift = [&](double t, const Vec& m, Vec& out) {
        eval_path(fb.u, t0, dt, t, u_stage);
        eval_path(lin.v, t0, dt, t, v_stage);
        eval_path(fb.mu, t0, dt, t, mu_stage);
        rate_matrix(model, u_stage, alpha);
        for (int z = 0; z < d; ++z) {
            double s = 0.0;
            for (int x = 0; x < d; ++x) s += m[x] * alpha[static_cast<std::size_t>(x) * d + z];
            out[z] = s;
        }
        for (int x = 0; x < d; ++x) {
            double row = 0.0;
            for (int z = 0; z < d; ++z) {
                if (z == x) continue;
                const double b = rate_slope(model, u_stage[z] - u_stage[x], z) *
                                 (v_stage[z] - v_stage[x]);
                out[z] += mu_stage[x] * b;
                row += b;
            }
            out[x] -= mu_stage[x] * row;
        }
    };

    auto v_rhs = [&](double t, const Vec& v, Vec& out) {
        eval_path(fb.u, t0, dt, t, u_stage);
        eval_path(fb.mu, t0, dt, t, mu_stage);
        eval_path(m_new, t0, dt, t, m_stage);
        rate_matrix(model, u_stage, alpha);
        for (int x = 0; x < d; ++x) {
            double s = 0.0;
            for (int y = 0; y < d; ++y) s += alpha[static_cast<std::size_t>(x) * d + y] * v[y];
            const Vec gf = model.grad_f2(x, mu_stage);
            double forcing = 0.0;
            for (int y = 0; y < d; ++y) forcing += gf[y] * m_stage[y];
            out[x] = -(s + forcing);
        }
    };

    // one alternating sweep: m forward with v frozen, then v backward along
    // the fresh m; returns the sup change against the stored pair
    auto one_sweep = [&]() {
        m_new.assign(K + 1, Vec(d));
        m_new[0] = m0;
        for (int k = 0; k < K; ++k) {
            const double t = t0 + k * dt;
            const Vec& m = m_new[k];
            m_drift(t, m, k1);
            for (int j = 0; j < d; ++j) tmp[j] = m[j] + 0.5 * dt * k1[j];
            m_drift(t + 0.5 * dt, tmp, k2);
            for (int j = 0; j < d; ++j) tmp[j] = m[j] + 0.5 * dt * k2[j];
            m_drift(t + 0.5 * dt, tmp, k3);
            for (int j = 0; j < d; ++j) tmp[j] = m[j] + dt * k3[j];
            m_drift(t + dt, tmp, k4);
            for (int j = 0; j < d; ++j)
                m_new[k + 1][j] = m[j] + dt / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
        }
        v_new.assign(K + 1, Vec(d));
        {
            const Vec& muT = fb.mu[K];
            for (int x = 0; x < d; ++x) {
                const Vec gg = model.grad_g(x, muT);
                double acc = 0.0;
                for (int y = 0; y < d; ++y) acc += gg[y] * m_new[K][y];
                v_new[K][x] = acc;
            }
        }
        const double h = -dt;
        for (int k = K; k > 0; --k) {
            const double t = t0 + k * dt;
            const Vec& v = v_new[k];
            v_rhs(t, v, k1);
            for (int j = 0; j < d; ++j) tmp[j] = v[j] + 0.5 * h * k1[j];
            v_rhs(t + 0.5 * h, tmp, k2);
            for (int j = 0; j < d; ++j) tmp[j] = v[j] + 0.5 * h * k2[j];
            v_rhs(t + 0.5 * h, tmp, k3);
            for (int j = 0; j < d; ++j) tmp[j] = v[j] + h * k3[j];
            v_rhs(t + h, tmp, k4);
            for (int j = 0; j < d; ++j)
                v_new[k - 1][j] = v[j] + h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
        }
        return std::max(sup_diff(v_new, lin.v), sup_diff(m_new, lin.m));
    };

    double m0_sup = 0.0;
    for (double w : m0) m0_sup = std::max(m0_sup, std::abs(w));
    const double bail = 1e9 * (1.0 + m0_sup);

    double gap = 0.0;
    bool converged = false;
    int it = 0;
    double damping = opts.damping;
    for (int attempt = 0; attempt < 4 && !converged; ++attempt, damping *= 0.5) {
        lin.v.assign(K + 1, Vec(d, 0.0));
        lin.m.assign(K + 1, Vec(d, 0.0));
        for (it = 1; it <= opts.max_iter; ++it) {
            gap = one_sweep();
            for (int k = 0; k <= K; ++k)
                for (int j = 0; j < d; ++j) {
                    lin.v[k][j] = (1.0 - damping) * lin.v[k][j] + damping * v_new[k][j];
                    lin.m[k][j] = m_new[k][j];
                }
            if (gap < opts.tol) {
                converged = true;
                break;
            }
            // clearly diverging: restart with stronger relaxation
            if (!std::isfinite(gap) || gap > bail) break;
        }
    }
    if (!converged)
        throw NonConvergence("solve_linearized: no fixed point within budget", gap, opts.max_iter);
    lin.iterations = it;
    lin.residual = gap;
    return lin;
}

std::vector<Vec> grad_eta_U_all(const ModelSpec& model, double t0, const Vec& eta, double dt,
                                double tol, double lin_tol) {
    FBOptions opts;
    opts.dt = dt;
    opts.tol = tol;
    const FBSolution fb = solve_fb(model, t0, eta, opts);
    const int d = model.d;
    std::vector<Vec> K(d, Vec(d, 0.0));
    LinearizedOptions lopts;
    lopts.tol = lin_tol;
    for (int y = 0; y < d; ++y) {
        Vec e(d, 0.0);
        e[y] = 1.0;
        const LinearizedSolution lin = solve_linearized(model, fb, e, lopts);
        for (int x = 0; x < d; ++x) K[x][y] = lin.v[0][x];
    }
    return K;
}

Vec grad_eta_U(const ModelSpec& model, double t0, int x, const Vec& eta, double dt, double tol,
               double lin_tol) {
    if (x < 0 || x >= model.d) throw InvalidInput("grad_eta_U: state out of range");
    return grad_eta_U_all(model, t0, eta, dt, tol, lin_tol)[x];
}

double master_residual(const ModelSpec& model, double t, int x, const Vec& eta, double fd_step,
                       double dt, double tol) {
    model.check();
    if (x < 0 || x >= model.d) throw InvalidInput("master_residual: state out of range");
    if (!(fd_step > 0)) throw InvalidInput("master_residual: fd_step must be > 0");
    if (t - 2 * fd_step < -1e-15 || t + 2 * fd_step > model.T + 1e-15)
        throw InvalidInput("master_residual: need 2*fd_step <= min(t, T - t) for the time stencil");

    const double dt_target = dt > 0 ? dt : model.T / 2000.0;
    const int K = std::max(4, static_cast<int>(std::llround((model.T - t) / dt_target)));

    FBOptions center;
    center.dt = dt_target;
    center.tol = tol;
    center.forced_steps = K;
    const FBSolution fb = solve_fb(model, t, eta, center);

    // the four offset solves replay exactly the center's iteration count and
    // step count, so the stopping error is a smooth function of the start
    // time and cancels in the symmetric difference
    auto offset_U = [&](double t0) {
        FBOptions o;
        o.dt = dt_target;
        o.tol = tol;
        o.forced_steps = K;
        o.forced_iterations = fb.iterations;
        return solve_fb(model, t0, eta, o).u[0];
    };
    const Vec up1 = offset_U(t + fd_step);
    const Vec up2 = offset_U(t + 2 * fd_step);
    const Vec um1 = offset_U(t - fd_step);
    const Vec um2 = offset_U(t - 2 * fd_step);
    const double dUdt =
        (-up2[x] + 8.0 * up1[x] - 8.0 * um1[x] + um2[x]) / (12.0 * fd_step);

    const std::vector<Vec> Kmat = grad_eta_U_all(model, t, eta, dt_target, tol, 1e-13);

    const int d = model.d;
    const Vec& u0 = fb.u[0];
    // per-capita jump intensity into z: sum_y eta_y a*_z(y, Delta_y U)
    Vec w(d, 0.0);
    Vec p(d);
    for (int y = 0; y < d; ++y) {
        if (eta[y] == 0.0) continue;
        for (int l = 0; l < d; ++l) p[l] = u0[l] - u0[y];
        const RateVector a = optimal_rates(model, y, p);
        for (int z = 0; z < d; ++z) w[z] += eta[y] * a.rates[z];
    }
    double grad_term = 0.0;
    for (int z = 0; z < d; ++z) grad_term += Kmat[x][z] * w[z];
    for (int l = 0; l < d; ++l) p[l] = u0[l] - u0[x];
    const double H = hamiltonian_H1(model, x, p) + model.f2_at(x, eta);
    return -dUdt - grad_term - H;
}

FBSolution mfg_flow(const ModelSpec& model, const Vec& mu0, double dt, double tol) {
    FBOptions opts;
    opts.dt = dt;
    opts.tol = tol;
    return solve_fb(model, 0.0, mu0, opts);
}

void export_fb_csv(const FBSolution& fb, std::ostream& out) {
    const int d = fb.mu.empty() ? 0 : static_cast<int>(fb.mu[0].size());
    out << "# t0=" << fb.t0 << " dt=" << fb.dt << " K=" << fb.K << "\n";
    out << "t";
    for (int x = 0; x < d; ++x) out << ",mu_" << (x + 1);
    for (int x = 0; x < d; ++x) out << ",u_" << (x + 1);
    out << "\n";
    out.precision(17);
    for (int k = 0; k <= fb.K && k < static_cast<int>(fb.mu.size()); ++k) {
        out << fb.t0 + k * fb.dt;
        for (int x = 0; x < d; ++x) out << "," << fb.mu[k][x];
        for (int x = 0; x < d; ++x) out << "," << fb.u[k][x];
        out << "\n";
    }
}

MasterPolicyTable MasterPolicyTable::build(const ModelSpec& model, int n,
                                           const BuildOptions& opts) {
    model.check();
    if (n < 2) throw InvalidInput("policy table: n must be >= 2");
    if (opts.knots < 2) throw InvalidInput("policy table: need at least 2 time knots");

    MasterPolicyTable tab;
    tab.model_ = model;
    tab.n_ = n;
    tab.grid_ = SimplexGrid::enumerate(model.d, n - 1);
    tab.Kt_ = opts.knots - 1;
    tab.dt_ = model.T / tab.Kt_;
    const long long R = tab.grid_.size();
    const int d = model.d;
    tab.values_.resize(static_cast<std::size_t>(opts.knots) * d * R);

    const double dt_fb = opts.dt_fb > 0 ? opts.dt_fb : model.T / 128.0;

    // each worker owns a contiguous band of grid points and warm-starts every
    // solve from its neighbor; knots advance from the horizon backwards so
    // the very first solves are the cheap short-span ones
    const int jobs = std::max(1, opts.jobs);
    auto solve_band = [&](long long r_begin, long long r_end) {
        FBSolution warm;
        bool have_warm = false;
        for (int k = tab.Kt_; k >= 0; --k) {
            const double t0 = k * tab.dt_;
            for (long long r = r_begin; r < r_end; ++r) {
                FBOptions o;
                o.dt = dt_fb;
                o.tol = opts.tol;
                o.damping = opts.damping;
                if (have_warm && warm.t0 == t0) o.warm = &warm;
                FBSolution fb;
                try {
                    fb = solve_fb(model, t0, tab.grid_.unrank(r), o);
                } catch (const NonConvergence&) {
                    o.damping = 0.5 * opts.damping;
                    o.warm = nullptr;
                    fb = solve_fb(model, t0, tab.grid_.unrank(r), o);
                }
                for (int x = 0; x < d; ++x)
                    tab.values_[(static_cast<std::size_t>(k) * d + x) * R + r] = fb.u[0][x];
                warm = std::move(fb);
                have_warm = true;
            }
        }
    };
    if (jobs <= 1) {
        solve_band(0, R);
    } else {
        const long long band = (R + jobs - 1) / jobs;
        std::vector<std::pair<long long, long long>> bands;
        for (long long b = 0; b < R; b += band) bands.emplace_back(b, std::min(R, b + band));
        parallel_for(bands.size(), jobs,
                     [&](std::size_t i) { solve_band(bands[i].first, bands[i].second); });
    }
    return tab;
}

double MasterPolicyTable::U(double t, int x, long long r) const {
    double s = std::clamp(t / dt_, 0.0, static_cast<double>(Kt_));
    int k = static_cast<int>(s);
    if (k >= Kt_) k = Kt_ - 1;
    const double w = s - k;
    const long long R = grid_.size();
    const double lo = values_[(static_cast<std::size_t>(k) * model_.d + x) * R + r];
    const double hi = values_[(static_cast<std::size_t>(k + 1) * model_.d + x) * R + r];
    return (1.0 - w) * lo + w * hi;
}

void MasterPolicyTable::delta_x(double t, int x, long long r, Vec& out) const {
    out.resize(model_.d);
    const double ux = U(t, x, r);
    for (int l = 0; l < model_.d; ++l) out[l] = U(t, l, r) - ux;
}

}  // namespace mfg
