#pragma once
// Exact simulation of the n-player controlled jump system, plus the coupled
// two-system construction used to measure how far the n-player equilibrium
// drifts from the limit policy.
//
// Events are generated by thinning: candidates arrive at the constant global
// rate n * bound, where bound is a per-player ceiling on the total jump
// intensity ((d-1) * a_hi for one system, twice that for a coupled pair). A
// candidate picks a uniform player and a single uniform draw decides the
// outcome: consecutive half-open bands of [0, 1) with widths rate / bound,
// one band per destination, and all remaining mass meaning "no move". Since
// off-diagonal rates live in [a_lo, a_hi], the bands always fit and the
// accepted events reproduce the variable-rate law exactly.
//
// For a coupled pair holding the same state, the bands are
//     min(aX_z, aY_z)          both systems move to z,
//     aX_z - min(aX_z, aY_z)   only X moves (the pair decouples),
//     aY_z - min(aX_z, aY_z)   only Y moves (the pair decouples),
// all divided by the pair bound. The X-bands union to width aX_z exactly, so
// the X-marginal keeps the single-system law while agreement is maximized.
// Once a pair has decoupled it never re-couples: each candidate is split by
// a fair coin into an X-proposal or a Y-proposal (each side then sees
// candidates at exactly the single-system bound) and the scaled remainder of
// the same draw decides acceptance.
//
// All draws come from counter-based streams keyed by (seed, purpose, player),
// so a record is a pure function of (model, n, policy, init, seed).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "fsmfg/hjb_n.hpp"
#include "fsmfg/master.hpp"
#include "fsmfg/model.hpp"

namespace mfg {

struct Event {
    double t = 0.0;
    int player = 0;
    int from = 0;
    int to = 0;
    char system = 'X';  // 'X' | 'Y' | 'B' (coupled pair moved together)
};

// Full transcript of one run. Count snapshots are stored per event, so the
// empirical measure path is exact and n * mu is integer by construction.
struct TrajectoryRecord {
    int n = 0;
    int d = 0;
    double T = 0.0;
    bool coupled = false;
    std::vector<Event> events;
    std::vector<double> times;                  // times[0] = 0, then one entry per event
    std::vector<std::vector<int>> mu_counts;    // X-system state counts after times[k]
    std::vector<std::vector<int>> nu_counts;    // Y-system counts (coupled runs only)
    std::vector<long long> arrivals;            // A_x(T): X-system jumps into x
    std::vector<long long> departures;          // S_x(T): X-system jumps out of x
    std::vector<double> decouple_times;         // per player; T if the pair never split
    long long candidates = 0;                   // proposals drawn (accepted + rejected)

    // Empirical measure of the X (resp. Y) system at t, right-continuous.
    Vec mu_at(double t) const;
    Vec nu_at(double t) const;
};

// Policy evaluation failed mid-run; carries everything simulated so far.
struct AbortedRun : std::runtime_error {
    TrajectoryRecord partial;
    AbortedRun(const std::string& msg, TrajectoryRecord rec)
        : std::runtime_error(msg), partial(std::move(rec)) {}
};

// Feedback rule for one system: fills `rates` (length d, entry z = jump rate
// toward z, entry at the current state ignored/zero) for the given player.
// `counts` are the state counts of that player's own system, including the
// player itself.
using PolicyFn =
    std::function<void(double t, int player, int x, const std::vector<int>& counts, Vec& rates)>;

// The three policy families the experiments use. Nash reads the exact
// n-player value grid; master reads a precomputed limit-value table; both
// evaluate the measure of the *other* players, (counts - e_x) / (n - 1).
struct PolicySpec {
    enum class Kind { Constant, Nash, Master };
    Kind kind = Kind::Constant;
    std::vector<Vec> constant_rates;          // d rows; row x used from state x
    const ValueGrid* vgrid = nullptr;         // Kind::Nash
    const MasterPolicyTable* table = nullptr; // Kind::Master

    static PolicySpec constant(std::vector<Vec> rates);
    static PolicySpec nash(const ValueGrid& grid);
    static PolicySpec master(const MasterPolicyTable& table);
};

// Compiles a PolicySpec against a model (validates constant rates against
// the box once, here, so the hot loop can assert instead of branch).
PolicyFn make_policy_fn(const ModelSpec& model, const PolicySpec& policy);

enum class InitMode { Deterministic, Iid };

// n starting states. Deterministic mode allocates counts by largest
// remainder (ties to the lower state), so sqrt(n) * (mu^n(0) - mu0) -> 0;
// iid mode samples each player independently from mu0.
std::vector<int> initial_states(int n, const Vec& mu0, InitMode mode, std::uint64_t seed = 0);

// Single-system run on [0, T] from the given initial states.
TrajectoryRecord simulate(const ModelSpec& model, int n, const PolicySpec& policy,
                          const std::vector<int>& init, std::uint64_t seed);
TrajectoryRecord simulate_fn(const ModelSpec& model, int n, const PolicyFn& rates,
                             const std::vector<int>& init, std::uint64_t seed);

// Coupled pair of systems from equal starts: X driven by the exact n-player
// policy, Y by the limit policy. The generic version takes two arbitrary
// feedback rules (tests use it to vary policies per player).
TrajectoryRecord simulate_coupled(const ModelSpec& model, int n, const ValueGrid& vgrid,
                                  const MasterPolicyTable& table, const std::vector<int>& init,
                                  std::uint64_t seed);
TrajectoryRecord simulate_coupled_fn(const ModelSpec& model, int n, const PolicyFn& x_rates,
                                     const PolicyFn& y_rates, const std::vector<int>& init,
                                     std::uint64_t seed);

// (sup_t ||mu^n(t) - nu^n(t)||_2, fraction of players that decoupled). The
// sup is exact: both paths are piecewise constant on the same event times.
std::pair<double, double> coupling_gap(const TrajectoryRecord& record);

// Centered counting processes of the X system, per state:
//   M_x(t) = n^{-1/2} (A_x(t) - integral of the aggregate arrival rate into x),
//   N_x(t) = n^{-1/2} (S_x(t) - integral of the aggregate departure rate from x).
// Between events rates vary only through the policy's time dependence
// (piecewise linear between value-table knots); the compensator is
// integrated by trapezoid panels no wider than dt_quad, split at event
// times. dt_quad <= 0 means T / 2000.
struct MartingalePaths {
    std::vector<double> times;  // 0, event times, T
    std::vector<Vec> M;         // per time, per state
    std::vector<Vec> N;
};
MartingalePaths martingale_paths(const ModelSpec& model, const TrajectoryRecord& record,
                                 const PolicySpec& policy, double dt_quad = -1.0);

// Point-of-view correction removing one player at state x from a measure on
// the 1/n grid: componentwise max{ n/(n-1) eta - 1/(n-1) e_x, 0 }.
Vec sharp_measure(const Vec& eta, int n, int x);

// Event log (t, player, from, to, system) and the X/Y measure paths, both
// with '#' provenance headers written by the caller.
void export_events_csv(const TrajectoryRecord& record, std::ostream& out);
void export_measures_csv(const TrajectoryRecord& record, std::ostream& out);

}  // namespace mfg
