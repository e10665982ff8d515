#include "fsmfg/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace mfg {

namespace {

constexpr std::uint64_t kClockFork = 0x636c6f636b;   // candidate arrival times
constexpr std::uint64_t kPickFork = 0x7069636b;      // which player a candidate hits
constexpr std::uint64_t kAcceptFork = 0x616363657074;  // per-player outcome draws
constexpr std::uint64_t kInitFork = 0x696e6974;      // iid initial states

constexpr double kBoxSlack = 1e-9;

std::vector<int> state_counts(int d, const std::vector<int>& states) {
    std::vector<int> counts(d, 0);
    for (int s : states) {
        if (s < 0 || s >= d) throw InvalidInput("initial state out of range");
        ++counts[s];
    }
    return counts;
}

// The hot-loop contract: a policy hands back off-diagonal rates inside the
// box, so the thinning bands are guaranteed to fit. A violation is a broken
// policy, reported as an aborted run like any other evaluation failure.
void check_band_fit(const ModelSpec& model, int x, const Vec& rates) {
    for (int z = 0; z < model.d; ++z) {
        if (z == x) continue;
        if (!(rates[z] >= model.a_lo - kBoxSlack) || !(rates[z] <= model.a_hi + kBoxSlack) ||
            !std::isfinite(rates[z]))
            throw std::runtime_error("policy produced a rate outside [a_lo, a_hi]");
    }
}

Vec measure_from_counts(const std::vector<int>& counts, int n) {
    Vec out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) / n;
    return out;
}

std::size_t locate(const std::vector<double>& times, double t) {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    return it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin() - 1);
}

}  // namespace

Vec TrajectoryRecord::mu_at(double t) const {
    return measure_from_counts(mu_counts[locate(times, t)], n);
}

Vec TrajectoryRecord::nu_at(double t) const {
    if (!coupled) throw InvalidInput("record has no second system");
    return measure_from_counts(nu_counts[locate(times, t)], n);
}

PolicySpec PolicySpec::constant(std::vector<Vec> rates) {
    PolicySpec p;
    p.kind = Kind::Constant;
    p.constant_rates = std::move(rates);
    return p;
}

PolicySpec PolicySpec::nash(const ValueGrid& grid) {
    PolicySpec p;
    p.kind = Kind::Nash;
    p.vgrid = &grid;
    return p;
}

PolicySpec PolicySpec::master(const MasterPolicyTable& table) {
    PolicySpec p;
    p.kind = Kind::Master;
    p.table = &table;
    return p;
}

PolicyFn make_policy_fn(const ModelSpec& model, const PolicySpec& policy) {
    switch (policy.kind) {
        case PolicySpec::Kind::Constant: {
            if (static_cast<int>(policy.constant_rates.size()) != model.d)
                throw InvalidInput("constant policy needs one row per state");
            for (int x = 0; x < model.d; ++x) {
                const Vec& row = policy.constant_rates[x];
                if (static_cast<int>(row.size()) != model.d)
                    throw InvalidInput("constant policy row has wrong length");
                for (int z = 0; z < model.d; ++z) {
                    if (z == x) continue;
                    if (row[z] < model.a_lo - kBoxSlack || row[z] > model.a_hi + kBoxSlack)
                        throw InvalidInput("constant policy rate outside [a_lo, a_hi]");
                }
            }
            std::vector<Vec> rows = policy.constant_rates;
            return [rows](double, int, int x, const std::vector<int>&, Vec& rates) {
                rates = rows[x];
                rates[x] = 0.0;
            };
        }
        case PolicySpec::Kind::Nash: {
            const ValueGrid* vg = policy.vgrid;
            if (!vg) throw InvalidInput("nash policy without a value grid");
            std::vector<int> others;
            return [vg, &model, others](double t, int, int x, const std::vector<int>& counts,
                                        Vec& rates) mutable {
                others = counts;
                --others[x];
                const long long r = vg->grid.rank_counts(others);
                const Vec delta = vg->delta_x(t, x, r);
                const RateVector a = optimal_rates(model, x, delta);
                rates = a.rates;
                rates[x] = 0.0;
            };
        }
        case PolicySpec::Kind::Master: {
            const MasterPolicyTable* tab = policy.table;
            if (!tab) throw InvalidInput("master policy without a table");
            std::vector<int> others;
            Vec delta;
            return [tab, &model, others, delta](double t, int, int x,
                                                const std::vector<int>& counts,
                                                Vec& rates) mutable {
                others = counts;
                --others[x];
                const long long r = tab->grid().rank_counts(others);
                tab->delta_x(t, x, r, delta);
                const RateVector a = optimal_rates(model, x, delta);
                rates = a.rates;
                rates[x] = 0.0;
            };
        }
    }
    throw InvalidInput("unknown policy kind");
}

std::vector<int> initial_states(int n, const Vec& mu0, InitMode mode, std::uint64_t seed) {
    if (n < 1) throw InvalidInput("initial_states: n must be >= 1");
    const int d = static_cast<int>(mu0.size());
    if (d < 1) throw InvalidInput("initial_states: empty measure");
    double sum = 0.0;
    for (double w : mu0) {
        if (w < -1e-12) throw InvalidInput("initial_states: negative measure component");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("initial_states: measure must sum to 1");

    std::vector<int> states;
    states.reserve(n);
    if (mode == InitMode::Deterministic) {
        // largest-remainder allocation; ties break toward the lower state so
        // the outcome is deterministic
        std::vector<int> counts(d);
        std::vector<std::pair<double, int>> frac(d);
        int assigned = 0;
        for (int x = 0; x < d; ++x) {
            const double target = n * mu0[x];
            counts[x] = static_cast<int>(std::floor(target));
            frac[x] = {target - counts[x], x};
            assigned += counts[x];
        }
        std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
            return a.first > b.first || (a.first == b.first && a.second < b.second);
        });
        for (int k = 0; k < n - assigned; ++k) ++counts[frac[k].second];
        for (int x = 0; x < d; ++x) states.insert(states.end(), counts[x], x);
    } else {
        rng::Stream draw = rng::Stream(seed).fork(kInitFork);
        for (int i = 0; i < n; ++i) {
            const double u = draw.u01(static_cast<std::uint64_t>(i));
            double cum = 0.0;
            int x = d - 1;
            for (int z = 0; z < d; ++z) {
                cum += mu0[z];
                if (u < cum) {
                    x = z;
                    break;
                }
            }
            states.push_back(x);
        }
    }
    return states;
}

TrajectoryRecord simulate_fn(const ModelSpec& model, int n, const PolicyFn& rates_fn,
                             const std::vector<int>& init, std::uint64_t seed) {
    model.check();
    if (static_cast<int>(init.size()) != n) throw InvalidInput("simulate: init size != n");
    const int d = model.d;

    TrajectoryRecord rec;
    rec.n = n;
    rec.d = d;
    rec.T = model.T;
    rec.arrivals.assign(d, 0);
    rec.departures.assign(d, 0);
    rec.decouple_times.assign(n, model.T);

    std::vector<int> states = init;
    std::vector<int> counts = state_counts(d, states);
    rec.times.push_back(0.0);
    rec.mu_counts.push_back(counts);

    const double bound = (d - 1) * model.a_hi;
    const double total = n * bound;
    rng::Stream root(seed);
    const rng::Stream clock = root.fork(kClockFork);
    const rng::Stream pick = root.fork(kPickFork);
    const rng::Stream accept_base = root.fork(kAcceptFork);
    std::vector<rng::Stream> accept;
    std::vector<std::uint64_t> accept_ctr(n, 0);
    accept.reserve(n);
    for (int i = 0; i < n; ++i) accept.push_back(accept_base.fork(static_cast<std::uint64_t>(i)));

    Vec rates(d);
    double t = 0.0;
    for (std::uint64_t k = 0;; ++k) {
        t += clock.exponential(k, total);
        if (t > model.T) break;
        ++rec.candidates;
        const int i = static_cast<int>(pick.index(k, static_cast<std::uint64_t>(n)));
        const int x = states[i];
        try {
            rates_fn(t, i, x, counts, rates);
            check_band_fit(model, x, rates);
        } catch (const std::exception& e) {
            throw AbortedRun(std::string("simulate: policy evaluation failed at t=") +
                                 std::to_string(t) + ": " + e.what(),
                             std::move(rec));
        }
        const double u = accept[i].u01(accept_ctr[i]++);
        double cum = 0.0;
        int dest = -1;
        for (int z = 0; z < d; ++z) {
            if (z == x) continue;
            cum += rates[z] / bound;
            if (u < cum) {
                dest = z;
                break;
            }
        }
        if (dest < 0) continue;  // residual mass: candidate rejected
        states[i] = dest;
        --counts[x];
        ++counts[dest];
        ++rec.arrivals[dest];
        ++rec.departures[x];
        rec.events.push_back({t, i, x, dest, 'X'});
        rec.times.push_back(t);
        rec.mu_counts.push_back(counts);
    }
    return rec;
}

TrajectoryRecord simulate(const ModelSpec& model, int n, const PolicySpec& policy,
                          const std::vector<int>& init, std::uint64_t seed) {
    if (policy.kind == PolicySpec::Kind::Nash && policy.vgrid &&
        policy.vgrid->grid.m() != n - 1)
        throw InvalidInput("simulate: value grid resolution does not match n");
    if (policy.kind == PolicySpec::Kind::Master && policy.table && policy.table->n() != n)
        throw InvalidInput("simulate: policy table resolution does not match n");
    return simulate_fn(model, n, make_policy_fn(model, policy), init, seed);
}

TrajectoryRecord simulate_coupled_fn(const ModelSpec& model, int n, const PolicyFn& x_rates,
                                     const PolicyFn& y_rates, const std::vector<int>& init,
                                     std::uint64_t seed) {
    model.check();
    if (static_cast<int>(init.size()) != n) throw InvalidInput("simulate_coupled: init size != n");
    const int d = model.d;

    TrajectoryRecord rec;
    rec.n = n;
    rec.d = d;
    rec.T = model.T;
    rec.coupled = true;
    rec.arrivals.assign(d, 0);
    rec.departures.assign(d, 0);
    rec.decouple_times.assign(n, model.T);

    std::vector<int> xs = init, ys = init;
    std::vector<int> x_counts = state_counts(d, xs);
    std::vector<int> y_counts = x_counts;
    std::vector<char> together(n, 1);
    rec.times.push_back(0.0);
    rec.mu_counts.push_back(x_counts);
    rec.nu_counts.push_back(y_counts);

    const double single_bound = (d - 1) * model.a_hi;
    const double pair_bound = 2.0 * single_bound;
    const double total = n * pair_bound;
    rng::Stream root(seed);
    const rng::Stream clock = root.fork(kClockFork);
    const rng::Stream pick = root.fork(kPickFork);
    const rng::Stream accept_base = root.fork(kAcceptFork);
    std::vector<rng::Stream> accept;
    std::vector<std::uint64_t> accept_ctr(n, 0);
    accept.reserve(n);
    for (int i = 0; i < n; ++i) accept.push_back(accept_base.fork(static_cast<std::uint64_t>(i)));

    Vec ax(d), ay(d);
    auto push_snapshot = [&](double when, int i, int from, int to, char system) {
        rec.events.push_back({when, i, from, to, system});
        rec.times.push_back(when);
        rec.mu_counts.push_back(x_counts);
        rec.nu_counts.push_back(y_counts);
    };

    double t = 0.0;
    for (std::uint64_t k = 0;; ++k) {
        t += clock.exponential(k, total);
        if (t > model.T) break;
        ++rec.candidates;
        const int i = static_cast<int>(pick.index(k, static_cast<std::uint64_t>(n)));
        const double u = accept[i].u01(accept_ctr[i]++);

        if (together[i]) {
            const int x = xs[i];
            try {
                x_rates(t, i, x, x_counts, ax);
                check_band_fit(model, x, ax);
                y_rates(t, i, x, y_counts, ay);
                check_band_fit(model, x, ay);
            } catch (const std::exception& e) {
                throw AbortedRun(std::string("simulate_coupled: policy evaluation failed at t=") +
                                     std::to_string(t) + ": " + e.what(),
                                 std::move(rec));
            }
            double cum = 0.0;
            int dest = -1;
            char which = 0;
            for (int z = 0; z < d && dest < 0; ++z) {
                if (z == x) continue;
                cum += std::min(ax[z], ay[z]) / pair_bound;
                if (u < cum) {
                    dest = z;
                    which = 'B';
                }
            }
            for (int z = 0; z < d && dest < 0; ++z) {
                if (z == x) continue;
                cum += (ax[z] - std::min(ax[z], ay[z])) / pair_bound;
                if (u < cum) {
                    dest = z;
                    which = 'X';
                }
            }
            for (int z = 0; z < d && dest < 0; ++z) {
                if (z == x) continue;
                cum += (ay[z] - std::min(ax[z], ay[z])) / pair_bound;
                if (u < cum) {
                    dest = z;
                    which = 'Y';
                }
            }
            if (dest < 0) continue;
            if (which == 'B') {
                xs[i] = dest;
                ys[i] = dest;
                --x_counts[x];
                ++x_counts[dest];
                --y_counts[x];
                ++y_counts[dest];
                ++rec.arrivals[dest];
                ++rec.departures[x];
            } else if (which == 'X') {
                xs[i] = dest;
                --x_counts[x];
                ++x_counts[dest];
                ++rec.arrivals[dest];
                ++rec.departures[x];
                together[i] = 0;
                rec.decouple_times[i] = t;
            } else {
                ys[i] = dest;
                --y_counts[x];
                ++y_counts[dest];
                together[i] = 0;
                rec.decouple_times[i] = t;
            }
            push_snapshot(t, i, x, dest, which);
        } else {
            // decoupled pair: a fair coin routes the candidate to one
            // coordinate and the rescaled remainder of the same uniform
            // decides acceptance for that coordinate alone
            const bool to_x = u < 0.5;
            const double u2 = to_x ? 2.0 * u : 2.0 * u - 1.0;
            const int from = to_x ? xs[i] : ys[i];
            Vec& a = to_x ? ax : ay;
            try {
                if (to_x)
                    x_rates(t, i, from, x_counts, a);
                else
                    y_rates(t, i, from, y_counts, a);
                check_band_fit(model, from, a);
            } catch (const std::exception& e) {
                throw AbortedRun(std::string("simulate_coupled: policy evaluation failed at t=") +
                                     std::to_string(t) + ": " + e.what(),
                                 std::move(rec));
            }
            double cum = 0.0;
            int dest = -1;
            for (int z = 0; z < d; ++z) {
                if (z == from) continue;
                cum += a[z] / single_bound;
                if (u2 < cum) {
                    dest = z;
                    break;
                }
            }
            if (dest < 0) continue;
            if (to_x) {
                xs[i] = dest;
                --x_counts[from];
                ++x_counts[dest];
                ++rec.arrivals[dest];
                ++rec.departures[from];
            } else {
                ys[i] = dest;
                --y_counts[from];
                ++y_counts[dest];
            }
            push_snapshot(t, i, from, dest, to_x ? 'X' : 'Y');
        }
    }
    return rec;
}

TrajectoryRecord simulate_coupled(const ModelSpec& model, int n, const ValueGrid& vgrid,
                                  const MasterPolicyTable& table, const std::vector<int>& init,
                                  std::uint64_t seed) {
    if (vgrid.grid.m() != n - 1)
        throw InvalidInput("simulate_coupled: value grid resolution does not match n");
    if (table.n() != n) throw InvalidInput("simulate_coupled: policy table does not match n");
    return simulate_coupled_fn(model, n, make_policy_fn(model, PolicySpec::nash(vgrid)),
                               make_policy_fn(model, PolicySpec::master(table)), init, seed);
}

std::pair<double, double> coupling_gap(const TrajectoryRecord& record) {
    if (!record.coupled) throw InvalidInput("coupling_gap: record has no second system");
    double sup = 0.0;
    for (std::size_t k = 0; k < record.times.size(); ++k) {
        double s = 0.0;
        for (int x = 0; x < record.d; ++x) {
            const double diff =
                static_cast<double>(record.mu_counts[k][x] - record.nu_counts[k][x]) / record.n;
            s += diff * diff;
        }
        sup = std::max(sup, std::sqrt(s));
    }
    int decoupled = 0;
    for (double tau : record.decouple_times)
        if (tau < record.T) ++decoupled;
    return {sup, static_cast<double>(decoupled) / record.n};
}

MartingalePaths martingale_paths(const ModelSpec& model, const TrajectoryRecord& record,
                                 const PolicySpec& policy, double dt_quad) {
    const int d = model.d;
    const PolicyFn fn = make_policy_fn(model, policy);
    const double hq = dt_quad > 0 ? dt_quad : model.T / 2000.0;
    const double root_n = std::sqrt(static_cast<double>(record.n));

    // aggregate arrival/departure intensities at time t under frozen counts;
    // every player parked at the same state shares one policy evaluation
    Vec rates(d);
    auto intensity = [&](double t, const std::vector<int>& counts, Vec& arr, Vec& dep) {
        std::fill(arr.begin(), arr.end(), 0.0);
        std::fill(dep.begin(), dep.end(), 0.0);
        for (int x = 0; x < d; ++x) {
            if (counts[x] == 0) continue;
            fn(t, 0, x, counts, rates);
            double row = 0.0;
            for (int z = 0; z < d; ++z) {
                if (z == x) continue;
                arr[z] += counts[x] * rates[z];
                row += rates[z];
            }
            dep[x] += counts[x] * row;
        }
    };

    MartingalePaths out;
    out.times.push_back(0.0);
    out.M.emplace_back(d, 0.0);
    out.N.emplace_back(d, 0.0);

    Vec arr_a(d), dep_a(d), arr_b(d), dep_b(d);
    Vec M(d, 0.0), N(d, 0.0);
    std::vector<long long> A(d, 0), S(d, 0);

    const std::size_t segments = record.times.size();
    for (std::size_t k = 0; k < segments; ++k) {
        const double a = record.times[k];
        const double b = (k + 1 < segments) ? record.times[k + 1] : record.T;
        if (b > a) {
            const std::vector<int>& counts = record.mu_counts[k];
            const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / hq)));
            const double h = (b - a) / panels;
            intensity(a, counts, arr_a, dep_a);
            for (int p = 0; p < panels; ++p) {
                const double t1 = (p + 1 == panels) ? b : a + (p + 1) * h;
                intensity(t1, counts, arr_b, dep_b);
                for (int x = 0; x < d; ++x) {
                    M[x] -= 0.5 * (t1 - (a + p * h)) * (arr_a[x] + arr_b[x]) / root_n;
                    N[x] -= 0.5 * (t1 - (a + p * h)) * (dep_a[x] + dep_b[x]) / root_n;
                }
                arr_a = arr_b;
                dep_a = dep_b;
            }
        }
        if (k + 1 < segments) {
            // the event at times[k+1]: one arrival, one departure (X system;
            // a Y-only move in a coupled record leaves the counters alone)
            const Event& e = record.events[k];
            if (e.system != 'Y') {
                ++A[e.to];
                ++S[e.from];
            }
        }
        // store the post-event (or terminal) values
        const double stamp = (k + 1 < segments) ? record.times[k + 1] : record.T;
        Vec Ms(d), Ns(d);
        for (int x = 0; x < d; ++x) {
            Ms[x] = A[x] / root_n + M[x];
            Ns[x] = S[x] / root_n + N[x];
        }
        out.times.push_back(stamp);
        out.M.push_back(std::move(Ms));
        out.N.push_back(std::move(Ns));
    }
    return out;
}

Vec sharp_measure(const Vec& eta, int n, int x) {
    const int d = static_cast<int>(eta.size());
    if (x < 0 || x >= d) throw InvalidInput("sharp_measure: state out of range");
    if (n < 2) throw InvalidInput("sharp_measure: n must be >= 2");
    Vec out(d);
    const double scale = static_cast<double>(n) / (n - 1);
    for (int z = 0; z < d; ++z) {
        const double shifted = scale * eta[z] - (z == x ? 1.0 / (n - 1) : 0.0);
        out[z] = std::max(shifted, 0.0);
    }
    return out;
}

void export_events_csv(const TrajectoryRecord& record, std::ostream& out) {
    out.precision(17);
    out << "t,player,from,to,system\n";
    for (const Event& e : record.events)
        out << e.t << ',' << e.player << ',' << e.from << ',' << e.to << ',' << e.system << '\n';
}

void export_measures_csv(const TrajectoryRecord& record, std::ostream& out) {
    out.precision(17);
    out << "t";
    for (int x = 0; x < record.d; ++x) out << ",mu_" << x;
    if (record.coupled)
        for (int x = 0; x < record.d; ++x) out << ",nu_" << x;
    out << '\n';
    for (std::size_t k = 0; k < record.times.size(); ++k) {
        out << record.times[k];
        for (int x = 0; x < record.d; ++x)
            out << ',' << static_cast<double>(record.mu_counts[k][x]) / record.n;
        if (record.coupled)
            for (int x = 0; x < record.d; ++x)
                out << ',' << static_cast<double>(record.nu_counts[k][x]) / record.n;
        out << '\n';
    }
}

}  // namespace mfg
