#include "fsmfg/hjb_n.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace mfg {

namespace {

// Slice-level right-hand-side evaluator with the shift tables and policy
// scratch shared across RK4 stages.
class RhsEvaluator {
public:
    RhsEvaluator(const ModelSpec& model, int n, const SimplexGrid& grid)
        : model_(model), n_(n), grid_(grid), R_(grid.size()) {
        eta_.resize(R_);
        counts_.resize(R_);
        for (long long r = 0; r < R_; ++r) {
            eta_[r] = grid_.unrank(r);
            counts_[r] = grid_.unrank_counts(r);
        }
        pol_.resize(static_cast<std::size_t>(model_.d) * R_ * model_.d);
        p_.resize(model_.d);
    }

    void operator()(const std::vector<double>& V, std::vector<double>& out) {
        const int d = model_.d;
        // feedback rates of a player at state y seeing measure eta_r, for
        // every (y, r): reused by every drift term that shifts into (y, r)
        for (int y = 0; y < d; ++y) {
            for (long long r = 0; r < R_; ++r) {
                const double V_y = V[static_cast<std::size_t>(y) * R_ + r];
                for (int l = 0; l < d; ++l) p_[l] = V[static_cast<std::size_t>(l) * R_ + r] - V_y;
                double* rates = &pol_[(static_cast<std::size_t>(y) * R_ + r) * d];
                for (int z = 0; z < d; ++z) {
                    if (z == y) {
                        rates[z] = 0.0;
                        continue;
                    }
                    const double raw = -p_[z] / (2.0 * model_.c[z]);
                    rates[z] = std::clamp(raw, model_.a_lo, model_.a_hi);
                }
            }
        }
        out.resize(V.size());
        for (int x = 0; x < d; ++x) {
            for (long long r = 0; r < R_; ++r) {
                const double V_x = V[static_cast<std::size_t>(x) * R_ + r];
                double drift = 0.0;
                for (int y = 0; y < d; ++y) {
                    const int ky = counts_[r][y];
                    if (ky == 0) continue;
                    const double eta_y = static_cast<double>(ky) / (n_ - 1);
                    // point of view of the player at y: one player moved from y to x
                    const long long r_pov = grid_.shifted_rank(r, y, x);
                    if (r_pov < 0) throw std::logic_error("hjb_rhs: infeasible point-of-view shift with occupied source state");
                    const double* rates = &pol_[(static_cast<std::size_t>(y) * R_ + r_pov) * d];
                    for (int z = 0; z < d; ++z) {
                        if (z == y) continue;
                        const long long r_yz = grid_.shifted_rank(r, y, z);
                        if (r_yz < 0) throw std::logic_error("hjb_rhs: infeasible shift with occupied source state");
                        const double D = (n_ - 1) * (V[static_cast<std::size_t>(x) * R_ + r_yz] - V_x);
                        drift += eta_y * D * rates[z];
                    }
                }
                for (int l = 0; l < d; ++l) p_[l] = V[static_cast<std::size_t>(l) * R_ + r] - V_x;
                out[static_cast<std::size_t>(x) * R_ + r] =
                    drift + hamiltonian_H1(model_, x, p_) + model_.f2_at(x, eta_[r]);
            }
        }
    }

    const Vec& eta(long long r) const { return eta_[r]; }

private:
    const ModelSpec& model_;
    int n_;
    const SimplexGrid& grid_;
    long long R_;
    std::vector<Vec> eta_;
    std::vector<std::vector<int>> counts_;
    std::vector<double> pol_;
    Vec p_;
};

}  // namespace

std::vector<double> hjb_rhs(const ModelSpec& model, int n, const std::vector<double>& slice) {
    model.check();
    if (n < 2) throw InvalidInput("hjb_rhs: n must be >= 2");
    const SimplexGrid grid = SimplexGrid::enumerate(model.d, n - 1);
    if (static_cast<long long>(slice.size()) != grid.size() * model.d)
        throw InvalidInput("hjb_rhs: slice has wrong size for the (n-1)-grid");
    RhsEvaluator rhs(model, n, grid);
    std::vector<double> out;
    rhs(slice, out);
    return out;
}

ValueGrid solve_hjb_n(const ModelSpec& model, int n, double dt, long long cap) {
    model.check();
    if (n < 2) throw InvalidInput("solve_hjb_n: n must be >= 2");
    if (!(dt > 0)) throw InvalidInput("solve_hjb_n: dt must be > 0");

    ValueGrid vg;
    vg.model = model;
    vg.n = n;
    vg.grid = SimplexGrid::enumerate(model.d, n - 1, cap);
    vg.K = std::max(1, static_cast<int>(std::llround(model.T / dt)));
    vg.dt = model.T / vg.K;

    const long long R = vg.grid.size();
    const int d = model.d;
    const long long total = static_cast<long long>(vg.K + 1) * d * R;
    if (total > cap) throw CapacityError("solve_hjb_n: stored values would exceed the capacity cap");
    vg.values.resize(static_cast<std::size_t>(total));

    RhsEvaluator rhs(model, n, vg.grid);

    // terminal slice: exactly g
    std::vector<double> V(static_cast<std::size_t>(d) * R);
    for (int x = 0; x < d; ++x)
        for (long long r = 0; r < R; ++r)
            V[static_cast<std::size_t>(x) * R + r] = model.g_at(x, rhs.eta(r));
    std::copy(V.begin(), V.end(),
              vg.values.begin() + static_cast<std::size_t>(vg.K) * d * R);

    // integrate in s = T - t; dV/ds = rhs(V)
    std::vector<double> k1, k2, k3, k4, tmp(V.size());
    const double h = vg.dt;
    for (int step = vg.K; step > 0; --step) {
        rhs(V, k1);
        for (std::size_t i = 0; i < V.size(); ++i) tmp[i] = V[i] + 0.5 * h * k1[i];
        rhs(tmp, k2);
        for (std::size_t i = 0; i < V.size(); ++i) tmp[i] = V[i] + 0.5 * h * k2[i];
        rhs(tmp, k3);
        for (std::size_t i = 0; i < V.size(); ++i) tmp[i] = V[i] + h * k3[i];
        rhs(tmp, k4);
        for (std::size_t i = 0; i < V.size(); ++i)
            V[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        for (std::size_t i = 0; i < V.size(); ++i) {
            if (!std::isfinite(V[i])) {
                const int x = static_cast<int>(i / R);
                const long long r = static_cast<long long>(i % R);
                std::ostringstream os;
                os << "solve_hjb_n: non-finite value at t=" << (step - 1) * vg.dt << " x=" << x
                   << " rank=" << r;
                throw DivergenceError(os.str());
            }
        }
        std::copy(V.begin(), V.end(),
                  vg.values.begin() + static_cast<std::size_t>(step - 1) * d * R);
    }

    // comparison bound: |V| <= max|g| + T * max|f| over the admissible box
    double g_max = 0.0, f2_max = 0.0;
    for (int x = 0; x < d; ++x)
        for (long long r = 0; r < R; ++r) {
            g_max = std::max(g_max, std::abs(model.g_at(x, rhs.eta(r))));
            f2_max = std::max(f2_max, std::abs(model.f2_at(x, rhs.eta(r))));
        }
    double f1_max = 0.0;
    for (int x = 0; x < d; ++x) {
        double v = std::abs(model.b1[x]);
        for (int y = 0; y < d; ++y)
            if (y != x) v += model.c[y] * model.a_hi * model.a_hi;
        f1_max = std::max(f1_max, v);
    }
    const double bound = g_max + model.T * (f1_max + f2_max) + 1e-6;
    for (double v : vg.values)
        if (std::abs(v) > bound)
            throw DivergenceError("solve_hjb_n: solution violates the comparison bound");

    return vg;
}

Vec ValueGrid::delta_x(double t, int x, long long r) const {
    Vec p(model.d);
    const double vx = value_at(t, x, r);
    for (int l = 0; l < model.d; ++l) p[l] = value_at(t, l, r) - vx;
    return p;
}

double ValueGrid::value_at(double t, int x, long long r) const {
    if (t < -1e-12 || t > model.T + 1e-12)
        throw InvalidInput("value_at: t outside [0, T]");
    double s = std::clamp(t / dt, 0.0, static_cast<double>(K));
    int k = static_cast<int>(s);
    if (k >= K) k = K - 1;
    const double w = s - k;
    return (1.0 - w) * value(k, x, r) + w * value(k + 1, x, r);
}

RateVector equilibrium_policy(const ValueGrid& vgrid, double t, int x, const Vec& eta_other) {
    const long long r = vgrid.grid.rank(eta_other);  // throws InvalidInput off-grid
    const Vec p = vgrid.delta_x(t, x, r);
    return optimal_rates(vgrid.model, x, p);
}

void export_value_grid_csv(const ValueGrid& vgrid, std::ostream& out) {
    out << "# value grid: n=" << vgrid.n << " dt=" << vgrid.dt << " K=" << vgrid.K << "\n";
    out << "t,x,rank,value\n";
    out.precision(17);
    for (int k = 0; k <= vgrid.K; ++k)
        for (int x = 0; x < vgrid.model.d; ++x)
            for (long long r = 0; r < vgrid.grid.size(); ++r)
                out << k * vgrid.dt << ',' << x << ',' << r << ',' << vgrid.value(k, x, r) << "\n";
}

ValueGrid import_value_grid_csv(const ModelSpec& model, std::istream& in) {
    std::string line;
    int n = -1, K = -1;
    double dt = 0.0;
    // header comments carry the grid geometry
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::size_t pos;
            if ((pos = line.find("n=")) != std::string::npos) n = std::atoi(line.c_str() + pos + 2);
            if ((pos = line.find("dt=")) != std::string::npos) dt = std::atof(line.c_str() + pos + 3);
            if ((pos = line.find("K=")) != std::string::npos) K = std::atoi(line.c_str() + pos + 2);
            continue;
        }
        break;  // column header line consumed
    }
    if (n < 2 || K < 1 || !(dt > 0))
        throw InvalidInput("value grid import: missing or malformed header");
    ValueGrid vg;
    vg.model = model;
    vg.n = n;
    vg.grid = SimplexGrid::enumerate(model.d, n - 1);
    vg.K = K;
    vg.dt = dt;
    const long long R = vg.grid.size();
    vg.values.assign(static_cast<std::size_t>(K + 1) * model.d * R,
                     std::numeric_limits<double>::quiet_NaN());
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double t, value;
        int x;
        long long r;
        char comma;
        if (!(ls >> t >> comma >> x >> comma >> r >> comma >> value))
            throw InvalidInput("value grid import: malformed row '" + line + "'");
        const int k = static_cast<int>(std::llround(t / dt));
        if (k < 0 || k > K || x < 0 || x >= model.d || r < 0 || r >= R)
            throw InvalidInput("value grid import: row outside the declared grid");
        vg.values[(static_cast<std::size_t>(k) * model.d + x) * R + r] = value;
        ++rows;
    }
    if (rows != vg.values.size())
        throw InvalidInput("value grid import: row count does not cover the grid");
    return vg;
}

}  // namespace mfg
