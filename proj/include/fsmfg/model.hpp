#pragma once
// Game data and the Hamiltonian layer.
//
// A model on states [d] = {0,..,d-1} has running cost
//     f(x, eta, a) = f1(x, a) + f2(x, eta),   f1(x, a) = b1[x] + sum_{y!=x} c[y] a_y^2,
// terminal cost g(x, eta), and admissible per-coordinate transition rates
// a_y in [a_lo, a_hi] for y != x (the diagonal entry is minus the row sum, so
// a rate vector is a generator row). The mean-field costs come in closed-form
// families f2(x, eta) = b2(eta_x), g(x, eta) = b3(eta_x) so that validation
// and the optimal control stay exact; arbitrary callables can be hooked in
// but are flagged unvalidated.
//
// Because f1 is a separable strictly convex quadratic, the constrained
// minimizer of the pre-Hamiltonian h(x, eta, a, p) = f + sum_{y!=x} a_y p_y
// is the box projection clamp(-p_y / (2 c_y), a_lo, a_hi) per coordinate.

#include <functional>
#include <string>
#include <vector>

#include "fsmfg/common.hpp"

namespace mfg {

enum class CostFamily { Zero, Linear };

// One-dimensional profile r -> b(r) applied to the mass at the player's own
// state: Zero gives b(r) = 0, Linear gives b(r) = scale * r.
struct CostSpec {
    CostFamily family = CostFamily::Zero;
    double scale = 1.0;

    double value(double r) const { return family == CostFamily::Zero ? 0.0 : scale * r; }
    double slope(double r) const {
        (void)r;
        return family == CostFamily::Zero ? 0.0 : scale;
    }
};

struct ModelSpec {
    int d = 2;
    double T = 1.0;
    Vec b1;         // per-state running-cost offset, length d
    Vec c;          // quadratic control-cost weights (per destination), length d, > 0
    CostSpec f2;    // mean-field running cost f2(x, eta) = b2(eta_x)
    CostSpec g;     // terminal cost g(x, eta) = b3(eta_x)
    double a_lo = 0.1, a_hi = 10.0;

    // Optional user-supplied costs; bypass the closed-form families and are
    // reported as "unvalidated" by validate_model.
    std::function<double(int, const Vec&)> f2_custom, g_custom;

    double f2_at(int x, const Vec& eta) const {
        return f2_custom ? f2_custom(x, eta) : f2.value(eta[x]);
    }
    double g_at(int x, const Vec& eta) const {
        return g_custom ? g_custom(x, eta) : g.value(eta[x]);
    }
    // Ambient-coordinate measure gradients (central differences for custom costs).
    Vec grad_f2(int x, const Vec& eta) const;
    Vec grad_g(int x, const Vec& eta) const;

    // Throws InvalidInput if the static invariants fail (d >= 2, T > 0,
    // c > 0, 0 < a_lo < a_hi, vector lengths).
    void check() const;
};

// Parses the documented JSON schema: {d, T, b1[], c[], f2:{family,params},
// g:{family,params}, a_lo, a_hi}. Throws InvalidInput on schema violations.
ModelSpec model_from_json(const std::string& json_text);
ModelSpec load_model(const std::string& path);
std::string model_to_json(const ModelSpec& model);

// A generator row based at `base`: rates[y] for y != base are the transition
// rates, rates[base] = -sum of the others.
struct RateVector {
    int base = 0;
    Vec rates;
};

// Throws InvalidInput unless a is a valid rate vector for state x under the
// model's box constraints (off-diagonals within [a_lo, a_hi] up to slack,
// diagonal equal to minus the off-diagonal sum).
void check_rates(const ModelSpec& model, int x, const RateVector& a);

// f(x, eta, a) = f1(x, a) + f2(x, eta). Independent of the x-th entry of a.
double running_cost(const ModelSpec& model, int x, const Vec& eta, const RateVector& a);

// h(x, eta, a, p) = f(x, eta, a) + sum_{y != x} a_y p_y.
double hamiltonian_h(const ModelSpec& model, int x, const Vec& eta, const RateVector& a,
                     const Vec& p);

// Per-coordinate closed-form minimizer over the box (no eta dependence
// beyond the additive f2 term in the value).
RateVector optimal_rates(const ModelSpec& model, int x, const Vec& p);

// H1(x, p) = b1[x] + sum_{y != x} min_{a in box} (c_y a^2 + a p_y): the
// state-coupling part of the Hamiltonian, without the mean-field term.
double hamiltonian_H1(const ModelSpec& model, int x, const Vec& p);

// Full Hamiltonian H(x, eta, p) = H1(x, p) + f2(x, eta); also returns the
// minimizing rate vector.
std::pair<RateVector, double> minimize_hamiltonian(const ModelSpec& model, int x, const Vec& eta,
                                                   const Vec& p);

struct ValidationCheck {
    std::string name;
    bool pass = false;
    double worst = 0.0;      // most violating sampled margin (sign convention per check)
    std::string detail;      // human-readable summary, includes the worst sample
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    bool all_pass = true;
};

// Spot-checks the standing assumptions on sampled measure pairs and control
// points: positive rate bounds, convexity of f1 in a, monotone terminal cost,
// strictly monotone mean-field running cost, and concavity of H1 in p.
// Never throws on a failed check — the report carries the verdicts.
ValidationReport validate_model(const ModelSpec& model, int samples = 200,
                                std::uint64_t seed = 1);

}  // namespace mfg
