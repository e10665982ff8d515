#pragma once
// The exact symmetric n-player value system, solved backward on the grid
// [d] x {measures of the other n-1 players}.
//
// With eta ranging over the (n-1)-resolution simplex grid, the value V(t,x,eta)
// of a player at state x satisfies
//   -dV/dt (t,x,eta) = sum_{y,z} eta_y * Dyz V(t,x,eta)
//                            * a*_z(y, eta + (e_x - e_y)/(n-1), Delta_y V(t,., eta + (e_x-e_y)/(n-1)))
//                    + H(x, eta, Delta_x V(t,.,eta)),
//   V(T,x,eta) = g(x,eta),
// where Dyz phi(eta) = (n-1)(phi(eta + (e_z-e_y)/(n-1)) - phi(eta)) and
// Delta_x V = (V(l) - V(x))_l. The measure argument of the other players'
// control carries the point-of-view shift toward x (one player moved from y
// to x). Terms with eta_y = 0 vanish and are skipped, as are y = z terms
// (the shift is the identity there).
//
// Integration is classic fixed-step RK4; the right-hand side is autonomous.

#include <iosfwd>
#include <vector>

#include "fsmfg/model.hpp"
#include "fsmfg/simplex.hpp"

namespace mfg {

struct ValueGrid {
    ModelSpec model;
    int n = 2;
    SimplexGrid grid;     // resolution m = n - 1
    double dt = 0.0;      // uniform step; slice k sits at t = k * dt
    int K = 0;            // number of steps; K+1 stored slices, slice K is t = T
    std::vector<double> values;  // [(k * d + x) * grid.size() + r]

    double value(int k, int x, long long r) const {
        return values[(static_cast<std::size_t>(k) * model.d + x) * grid.size() + r];
    }
    // V(t, l, eta_r) - V(t, x, eta_r) over l, with V linearly interpolated in t.
    Vec delta_x(double t, int x, long long r) const;
    // Time-interpolated value at (t, x, eta_r).
    double value_at(double t, int x, long long r) const;
};

// One evaluation of the backward right-hand side (-dV/dt) on a full slice.
// `slice` is laid out x-major: slice[x * R + r]; the result matches.
std::vector<double> hjb_rhs(const ModelSpec& model, int n, const std::vector<double>& slice);

// Integrates the system backward from V(T) = g with RK4 at fixed step dt.
// Throws CapacityError when (T/dt + 1) * d * grid size exceeds cap and
// DivergenceError if a non-finite value appears or the comparison bound
// max|V| <= max|g| + T * max|f| fails.
ValueGrid solve_hjb_n(const ModelSpec& model, int n, double dt, long long cap = 20'000'000);

// a*(x, eta_other, Delta_x V(t, ., eta_other)): the per-player feedback rates
// induced by the value grid. eta_other must lie on the (n-1)-grid.
RateVector equilibrium_policy(const ValueGrid& vgrid, double t, int x, const Vec& eta_other);

// Flat table exchange format (documented column order: t, x, rank, value),
// preceded by '#'-comment header lines carrying n and dt.
void export_value_grid_csv(const ValueGrid& vgrid, std::ostream& out);
ValueGrid import_value_grid_csv(const ModelSpec& model, std::istream& in);

}  // namespace mfg
