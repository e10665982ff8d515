#include "fsmfg/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mfg {

using nlohmann::json;

namespace {

// Slack for box-membership checks on caller-supplied rate vectors.
constexpr double kRateSlack = 1e-9;

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

CostSpec cost_from_json(const json& j, const char* key) {
    if (!j.contains(key)) return CostSpec{};
    const json& spec = j.at(key);
    CostSpec out;
    const std::string family = spec.value("family", "zero");
    if (family == "zero") {
        out.family = CostFamily::Zero;
    } else if (family == "linear") {
        out.family = CostFamily::Linear;
        if (spec.contains("params") && spec.at("params").contains("scale"))
            out.scale = spec.at("params").at("scale").get<double>();
    } else {
        throw InvalidInput(std::string("unknown cost family '") + family + "' for " + key);
    }
    return out;
}

json cost_to_json(const CostSpec& c) {
    json j;
    j["family"] = (c.family == CostFamily::Zero) ? "zero" : "linear";
    if (c.family == CostFamily::Linear) j["params"] = {{"scale", c.scale}};
    return j;
}

}  // namespace

Vec ModelSpec::grad_f2(int x, const Vec& eta) const {
    Vec out(d, 0.0);
    if (f2_custom) {
        const double h = 1e-6;
        Vec e = eta;
        for (int z = 0; z < d; ++z) {
            e[z] = eta[z] + h;
            const double up = f2_custom(x, e);
            e[z] = eta[z] - h;
            const double dn = f2_custom(x, e);
            e[z] = eta[z];
            out[z] = (up - dn) / (2 * h);
        }
        return out;
    }
    out[x] = f2.slope(eta[x]);
    return out;
}

Vec ModelSpec::grad_g(int x, const Vec& eta) const {
    Vec out(d, 0.0);
    if (g_custom) {
        const double h = 1e-6;
        Vec e = eta;
        for (int z = 0; z < d; ++z) {
            e[z] = eta[z] + h;
            const double up = g_custom(x, e);
            e[z] = eta[z] - h;
            const double dn = g_custom(x, e);
            e[z] = eta[z];
            out[z] = (up - dn) / (2 * h);
        }
        return out;
    }
    out[x] = g.slope(eta[x]);
    return out;
}

void ModelSpec::check() const {
    if (d < 2) throw InvalidInput("model: d must be >= 2");
    if (!(T > 0)) throw InvalidInput("model: T must be > 0");
    if (static_cast<int>(b1.size()) != d) throw InvalidInput("model: b1 must have length d");
    if (static_cast<int>(c.size()) != d) throw InvalidInput("model: c must have length d");
    for (double w : c)
        if (!(w > 0)) throw InvalidInput("model: every control-cost weight c_y must be > 0");
    if (!(a_lo > 0)) throw InvalidInput("model: a_lo must be > 0 (minimal rate is positive)");
    if (!(a_hi > a_lo)) throw InvalidInput("model: a_hi must exceed a_lo");
}

ModelSpec model_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InvalidInput(std::string("model config: JSON parse error: ") + e.what());
    }
    ModelSpec m;
    try {
        m.d = j.at("d").get<int>();
        m.T = j.at("T").get<double>();
        m.b1 = j.value("b1", Vec(static_cast<std::size_t>(std::max(m.d, 0)), 0.0));
        m.c = j.at("c").get<Vec>();
        m.f2 = cost_from_json(j, "f2");
        m.g = cost_from_json(j, "g");
        m.a_lo = j.value("a_lo", 0.1);
        m.a_hi = j.value("a_hi", 10.0);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("model config: ") + e.what());
    }
    m.check();
    return m;
}

ModelSpec load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("model config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

std::string model_to_json(const ModelSpec& model) {
    json j;
    j["d"] = model.d;
    j["T"] = model.T;
    j["b1"] = model.b1;
    j["c"] = model.c;
    j["f2"] = cost_to_json(model.f2);
    j["g"] = cost_to_json(model.g);
    j["a_lo"] = model.a_lo;
    j["a_hi"] = model.a_hi;
    return j.dump(2);
}

void check_rates(const ModelSpec& model, int x, const RateVector& a) {
    if (x < 0 || x >= model.d) throw InvalidInput("rates: base state out of range");
    if (a.base != x) throw InvalidInput("rates: base state does not match evaluation state");
    if (static_cast<int>(a.rates.size()) != model.d)
        throw InvalidInput("rates: dimension mismatch");
    double off_sum = 0.0;
    for (int y = 0; y < model.d; ++y) {
        if (y == x) continue;
        if (a.rates[y] < model.a_lo - kRateSlack || a.rates[y] > model.a_hi + kRateSlack)
            throw InvalidInput("rates: off-diagonal entry outside the admissible box");
        off_sum += a.rates[y];
    }
    if (std::abs(a.rates[x] + off_sum) > 1e-7)
        throw InvalidInput("rates: diagonal entry must equal minus the off-diagonal sum");
}

double running_cost(const ModelSpec& model, int x, const Vec& eta, const RateVector& a) {
    if (static_cast<int>(eta.size()) != model.d) throw InvalidInput("running_cost: eta dimension mismatch");
    check_rates(model, x, a);
    double f1 = model.b1[x];
    for (int y = 0; y < model.d; ++y) {
        if (y == x) continue;
        f1 += model.c[y] * a.rates[y] * a.rates[y];
    }
    return f1 + model.f2_at(x, eta);
}

double hamiltonian_h(const ModelSpec& model, int x, const Vec& eta, const RateVector& a,
                     const Vec& p) {
    if (static_cast<int>(p.size()) != model.d) throw InvalidInput("hamiltonian_h: p dimension mismatch");
    double h = running_cost(model, x, eta, a);
    for (int y = 0; y < model.d; ++y) {
        if (y == x) continue;
        h += a.rates[y] * p[y];
    }
    return h;
}

RateVector optimal_rates(const ModelSpec& model, int x, const Vec& p) {
    if (static_cast<int>(p.size()) != model.d) throw InvalidInput("optimal_rates: p dimension mismatch");
    RateVector a;
    a.base = x;
    a.rates.assign(model.d, 0.0);
    double off_sum = 0.0;
    for (int y = 0; y < model.d; ++y) {
        if (y == x) continue;
        const double unconstrained = -p[y] / (2.0 * model.c[y]);
        a.rates[y] = clamp(unconstrained, model.a_lo, model.a_hi);
        off_sum += a.rates[y];
    }
    a.rates[x] = -off_sum;
    return a;
}

double hamiltonian_H1(const ModelSpec& model, int x, const Vec& p) {
    double H = model.b1[x];
    for (int y = 0; y < model.d; ++y) {
        if (y == x) continue;
        const double a = clamp(-p[y] / (2.0 * model.c[y]), model.a_lo, model.a_hi);
        H += model.c[y] * a * a + a * p[y];
    }
    return H;
}

std::pair<RateVector, double> minimize_hamiltonian(const ModelSpec& model, int x, const Vec& eta,
                                                   const Vec& p) {
    if (static_cast<int>(eta.size()) != model.d)
        throw InvalidInput("minimize_hamiltonian: eta dimension mismatch");
    RateVector a = optimal_rates(model, x, p);
    const double H = hamiltonian_H1(model, x, p) + model.f2_at(x, eta);
    return {a, H};
}

namespace {

// Random point on the interior of the probability simplex (normalized
// exponentials, so all components are strictly positive).
Vec random_measure(const rng::Stream& s, std::uint64_t ctr, int d) {
    Vec eta(d);
    double sum = 0.0;
    for (int i = 0; i < d; ++i) {
        eta[i] = -std::log1p(-s.u01(ctr * 97 + static_cast<std::uint64_t>(i)));
        sum += eta[i];
    }
    for (double& e : eta) e /= sum;
    return eta;
}

}  // namespace

ValidationReport validate_model(const ModelSpec& model, int samples, std::uint64_t seed) {
    ValidationReport report;
    const int d = model.d;
    rng::Stream root(seed);

    auto add = [&report](ValidationCheck c) {
        report.all_pass = report.all_pass && c.pass;
        report.checks.push_back(std::move(c));
    };

    {  // positive rate bounds (structural, no sampling needed)
        ValidationCheck c;
        c.name = "positive_rate_bounds";
        c.pass = model.a_lo > 0 && model.a_hi > model.a_lo;
        c.worst = model.a_lo;
        c.detail = c.pass ? "0 < a_lo < a_hi" : "requires 0 < a_lo < a_hi";
        add(c);
    }

    {  // convexity of f1 in a: needs every quadratic weight strictly positive
        ValidationCheck c;
        c.name = "f1_convex_in_a";
        double worst = 1e300;
        for (double w : model.c) worst = std::min(worst, w);
        c.pass = worst > 0;
        c.worst = worst;
        c.detail = c.pass ? "all quadratic weights positive" : "a control-cost weight is <= 0";
        add(c);
    }

    // Monotonicity in the measure: sum_x (F(x,eta) - F(x,eta')) (eta_x - eta'_x)
    // must be >= 0 for the terminal cost and >= margin * ||eta - eta'||^2 for
    // the running mean-field cost.
    auto monotone_margin = [&](auto&& F, const rng::Stream& s, double& worst, int& worst_idx) {
        worst = 1e300;
        worst_idx = -1;
        for (int k = 0; k < samples; ++k) {
            const Vec eta = random_measure(s, 2 * static_cast<std::uint64_t>(k), d);
            const Vec etap = random_measure(s, 2 * static_cast<std::uint64_t>(k) + 1, d);
            double lhs = 0.0, nrm2 = 0.0;
            for (int x = 0; x < d; ++x) {
                lhs += (F(x, eta) - F(x, etap)) * (eta[x] - etap[x]);
                nrm2 += (eta[x] - etap[x]) * (eta[x] - etap[x]);
            }
            if (nrm2 < 1e-18) continue;
            const double margin = lhs / nrm2;
            if (margin < worst) {
                worst = margin;
                worst_idx = k;
            }
        }
    };

    {
        ValidationCheck c;
        c.name = "f2_strictly_monotone";
        double worst;
        int idx;
        monotone_margin([&](int x, const Vec& e) { return model.f2_at(x, e); }, root.fork(1),
                        worst, idx);
        c.pass = worst > 1e-9;
        c.worst = worst;
        std::ostringstream os;
        os << "min sampled margin " << worst << " at sample " << idx
           << (model.f2_custom ? " (custom f2: unvalidated closed form)" : "");
        c.detail = os.str();
        add(c);
    }

    {
        ValidationCheck c;
        c.name = "g_monotone";
        double worst;
        int idx;
        monotone_margin([&](int x, const Vec& e) { return model.g_at(x, e); }, root.fork(2),
                        worst, idx);
        c.pass = worst > -1e-9;
        c.worst = worst;
        std::ostringstream os;
        os << "min sampled margin " << worst << " at sample " << idx
           << (model.g_custom ? " (custom g: unvalidated closed form)" : "");
        c.detail = os.str();
        add(c);
    }

    {  // concavity of H1 in p along sampled chords (holds away from clamp kinks)
        ValidationCheck c;
        c.name = "H1_concave_in_p";
        rng::Stream s = root.fork(3);
        double worst = 1e300;
        for (int k = 0; k < samples; ++k) {
            const int x = static_cast<int>(s.index(4 * static_cast<std::uint64_t>(k), d));
            Vec p1(d), p2(d);
            for (int y = 0; y < d; ++y) {
                p1[y] = 8.0 * (s.u01(static_cast<std::uint64_t>(4 * k + 1) * 131 + y) - 0.5);
                p2[y] = 8.0 * (s.u01(static_cast<std::uint64_t>(4 * k + 2) * 131 + y) - 0.5);
            }
            Vec mid(d);
            for (int y = 0; y < d; ++y) mid[y] = 0.5 * (p1[y] + p2[y]);
            const double gap = hamiltonian_H1(model, x, mid) -
                               0.5 * (hamiltonian_H1(model, x, p1) + hamiltonian_H1(model, x, p2));
            worst = std::min(worst, gap);
        }
        c.pass = worst > -1e-9;
        c.worst = worst;
        std::ostringstream os;
        os << "min sampled midpoint gap " << worst;
        c.detail = os.str();
        add(c);
    }

    return report;
}

}  // namespace mfg
