// Experiment driver: one binary, one experiment per invocation. A JSON
// config names the model and the run parameters; command-line flags override
// individual fields. Machine-readable artifacts (CSV tables, JSON reports)
// land in the output directory, each carrying the fully resolved
// configuration so a result is reproducible from the artifact alone; stdout
// is a human-readable digest of the same numbers. Nothing in an artifact
// depends on the clock, so a fixed seed reproduces output bytes exactly.
//
// Exit codes: 0 success, 1 numerical failure (non-convergence, divergence,
// capacity), 2 usage or config error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "fsmfg/fluctuations.hpp"
#include "fsmfg/hjb_n.hpp"
#include "fsmfg/master.hpp"
#include "fsmfg/model.hpp"
#include "fsmfg/simulate.hpp"
#include "fsmfg/stats.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mfg;

namespace {

const std::vector<std::string> kExperiments = {
    "solve-hjb", "solve-mfg", "simulate", "converge", "coupling", "fluctuations", "residual"};
const std::vector<std::string> kRecordLevels = {"events", "measures", "summary"};

struct RunConfig {
    std::string model_path;
    std::string experiment;
    std::vector<int> ns = {4, 8, 16};
    int reps = 20;
    std::uint64_t seed = 1;
    int jobs = 1;
    std::string out_dir = "out";
    std::string record_level = "summary";
    double dt = -1.0;  // <= 0: per-module defaults
    double tol = 1e-9;
    Vec mu0;  // empty: uniform
    int residual_points = 200;
    double sd_tolerance = 0.15;
};

template <typename T>
T field(const json& j, const char* key, T fallback) {
    try {
        return j.value(key, fallback);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("run config: field '") + key + "': " + e.what());
    }
}

RunConfig config_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("run config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidInput("run config: " + std::string(e.what()));
    }
    RunConfig c;
    c.model_path = field<std::string>(j, "model", "");
    c.experiment = field<std::string>(j, "experiment", "");
    c.ns = field(j, "n", c.ns);
    c.reps = field(j, "reps", c.reps);
    c.seed = field(j, "seed", c.seed);
    c.jobs = field(j, "jobs", c.jobs);
    c.out_dir = field<std::string>(j, "out", c.out_dir);
    c.record_level = field<std::string>(j, "record_level", c.record_level);
    c.dt = field(j, "dt", c.dt);
    c.tol = field(j, "tol", c.tol);
    c.mu0 = field(j, "mu0", c.mu0);
    c.residual_points = field(j, "residual_points", c.residual_points);
    c.sd_tolerance = field(j, "sd_tolerance", c.sd_tolerance);
    // a relative model path counts from the config file, not the cwd
    if (!c.model_path.empty() && fs::path(c.model_path).is_relative())
        c.model_path = (fs::path(path).parent_path() / c.model_path).string();
    return c;
}

void validate(const RunConfig& c) {
    if (c.experiment.empty()) throw InvalidInput("run config: no experiment named");
    if (std::find(kExperiments.begin(), kExperiments.end(), c.experiment) == kExperiments.end())
        throw InvalidInput("run config: unknown experiment '" + c.experiment + "'");
    if (c.model_path.empty()) throw InvalidInput("run config: no model file named");
    if (c.ns.empty()) throw InvalidInput("run config: empty n list");
    for (int n : c.ns)
        if (n < 2) throw InvalidInput("run config: n must be >= 2");
    if (c.reps < 1) throw InvalidInput("run config: reps must be >= 1");
    if (c.jobs < 1) throw InvalidInput("run config: jobs must be >= 1");
    if (std::find(kRecordLevels.begin(), kRecordLevels.end(), c.record_level) ==
        kRecordLevels.end())
        throw InvalidInput("run config: record level must be events|measures|summary");
    if (c.residual_points < 1) throw InvalidInput("run config: residual_points must be >= 1");
    if (!(c.sd_tolerance > 0)) throw InvalidInput("run config: sd_tolerance must be > 0");
}

json resolved_config(const RunConfig& c) {
    json j;
    j["model"] = c.model_path;
    j["experiment"] = c.experiment;
    j["n"] = c.ns;
    j["reps"] = c.reps;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["out"] = c.out_dir;
    j["record_level"] = c.record_level;
    j["dt"] = c.dt;
    j["tol"] = c.tol;
    j["mu0"] = c.mu0;
    j["residual_points"] = c.residual_points;
    j["sd_tolerance"] = c.sd_tolerance;
    return j;
}

std::ofstream open_artifact(const RunConfig& c, const std::string& name) {
    const fs::path path = fs::path(c.out_dir) / name;
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
    out.precision(17);
    return out;
}

// every table starts with the resolved config on one comment line
void provenance(std::ofstream& out, const json& cfg) { out << "# config " << cfg.dump() << "\n"; }

void write_report(const RunConfig& c, const std::string& name, json report, const json& cfg) {
    report["config"] = cfg;
    std::ofstream out = open_artifact(c, name);
    out << report.dump(2) << "\n";
}

Vec start_measure(const RunConfig& c, const ModelSpec& model) {
    if (c.mu0.empty()) return Vec(model.d, 1.0 / model.d);
    if (static_cast<int>(c.mu0.size()) != model.d)
        throw InvalidInput("run config: mu0 length does not match the model");
    double mass = 0.0;
    for (double w : c.mu0) {
        if (w < 0) throw InvalidInput("run config: mu0 has a negative entry");
        mass += w;
    }
    if (std::abs(mass - 1.0) > 1e-9) throw InvalidInput("run config: mu0 must sum to 1");
    return c.mu0;
}

// ------------------------------------------------------------- experiments

int run_solve_hjb(const RunConfig& c, const ModelSpec& model, const json& cfg) {
    json rows = json::array();
    for (int n : c.ns) {
        const double dt = c.dt > 0 ? c.dt : model.T / 2000;
        const ValueGrid v = solve_hjb_n(model, n, dt);
        std::ofstream out = open_artifact(c, "hjb_values_n" + std::to_string(n) + ".csv");
        provenance(out, cfg);
        export_value_grid_csv(v, out);
        double lo = v.values[0], hi = v.values[0];
        for (long long r = 0; r < v.grid.size(); ++r)
            for (int x = 0; x < model.d; ++x) {
                lo = std::min(lo, v.value(0, x, r));
                hi = std::max(hi, v.value(0, x, r));
            }
        rows.push_back({{"n", n},
                        {"grid_points", v.grid.size()},
                        {"dt", v.dt},
                        {"value_min_t0", lo},
                        {"value_max_t0", hi}});
        std::printf("solve-hjb  n=%-4d grid %lld  V(0,.) in [%.6f, %.6f]\n", n,
                    static_cast<long long>(v.grid.size()), lo, hi);
    }
    write_report(c, "solve_hjb.json", json{{"rows", rows}}, cfg);
    return 0;
}

int run_solve_mfg(const RunConfig& c, const ModelSpec& model, const json& cfg) {
    const Vec mu0 = start_measure(c, model);
    FBOptions fopts;
    fopts.dt = c.dt;
    fopts.tol = c.tol;
    const FBSolution flow = solve_fb(model, 0.0, mu0, fopts);
    std::ofstream out = open_artifact(c, "mfg_flow.csv");
    provenance(out, cfg);
    export_fb_csv(flow, out);
    json report{{"iterations", flow.iterations},
                {"fixed_point_gap", flow.residual},
                {"u0", flow.u.front()},
                {"terminal_mu", flow.mu.back()}};
    write_report(c, "solve_mfg.json", report, cfg);
    std::printf("solve-mfg  %d iterations, fixed-point gap %.2e, mu(T) = ", flow.iterations,
                flow.residual);
    for (double w : flow.mu.back()) std::printf("%.6f ", w);
    std::printf("\n");
    return 0;
}

int run_simulate(const RunConfig& c, const ModelSpec& model, const json& cfg) {
    const Vec mu0 = start_measure(c, model);
    const rng::Stream root(c.seed);
    json rows = json::array();
    for (int n : c.ns) {
        TableBuildOptions topts;
        topts.jobs = c.jobs;
        const MasterPolicyTable table = MasterPolicyTable::build(model, n, topts);
        const PolicySpec policy = PolicySpec::master(table);
        const std::vector<int> init = initial_states(n, mu0, InitMode::Deterministic);
        std::vector<TrajectoryRecord> recs(c.reps);
        const rng::Stream cell = root.fork(static_cast<std::uint64_t>(n));
        parallel_for(recs.size(), c.jobs, [&](std::size_t rep) {
            recs[rep] = simulate(model, n, policy, init, cell.bits(rep));
        });
        Vec mean_terminal(model.d, 0.0);
        double mean_events = 0.0, mean_candidates = 0.0;
        for (int rep = 0; rep < c.reps; ++rep) {
            const TrajectoryRecord& rec = recs[rep];
            const Vec muT = rec.mu_at(model.T);
            for (int x = 0; x < model.d; ++x) mean_terminal[x] += muT[x] / c.reps;
            mean_events += static_cast<double>(rec.events.size()) / c.reps;
            mean_candidates += static_cast<double>(rec.candidates) / c.reps;
            const std::string tag = "_n" + std::to_string(n) + "_rep" + std::to_string(rep);
            if (c.record_level == "events") {
                std::ofstream out = open_artifact(c, "events" + tag + ".csv");
                provenance(out, cfg);
                export_events_csv(rec, out);
            }
            if (c.record_level == "events" || c.record_level == "measures") {
                std::ofstream out = open_artifact(c, "measures" + tag + ".csv");
                provenance(out, cfg);
                export_measures_csv(rec, out);
            }
        }
        rows.push_back({{"n", n},
                        {"reps", c.reps},
                        {"mean_terminal_mu", mean_terminal},
                        {"mean_events", mean_events},
                        {"mean_candidates", mean_candidates}});
        std::printf("simulate   n=%-4d %d runs, %.1f events/run, mu(T) mean = ", n, c.reps,
                    mean_events);
        for (double w : mean_terminal) std::printf("%.6f ", w);
        std::printf("\n");
    }
    write_report(c, "simulate.json", json{{"rows", rows}}, cfg);
    return 0;
}

// log-log slope, or NaN when it is undefined (a gap hit zero, or one point)
double slope_or_nan(const std::vector<double>& ns, const std::vector<double>& ys) {
    try {
        return stats::log_log_slope(ns, ys);
    } catch (const InvalidInput&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

json json_slope(double s) { return std::isfinite(s) ? json(s) : json(); }

int run_converge(const RunConfig& c, const ModelSpec& model, const json& cfg) {
    const Vec mu0 = start_measure(c, model);
    const rng::Stream root(c.seed);
    std::ofstream table = open_artifact(c, "converge.csv");
    provenance(table, cfg);
    table << "n,sup_gap,avg_gap,status\n";
    json rows = json::array();
    std::vector<double> ns_ok, sups, avgs;
    bool failed = false;
    for (int n : c.ns) {
        try {
            const double dt = c.dt > 0 ? c.dt : model.T / 2000;
            const ValueGrid v = solve_hjb_n(model, n, dt);
            // sup over the whole (state, grid) slice at t = 0
            double sup = 0.0;
            std::vector<double> U(static_cast<std::size_t>(v.grid.size()) * model.d);
            for (long long r = 0; r < v.grid.size(); ++r) {
                const Vec eta = v.grid.unrank(r);
                for (int x = 0; x < model.d; ++x) {
                    U[static_cast<std::size_t>(r) * model.d + x] =
                        master_U(model, 0.0, x, eta, c.dt, c.tol);
                    sup = std::max(
                        sup, std::abs(v.value(0, x, r) - U[static_cast<std::size_t>(r) * model.d + x]));
                }
            }
            // per-player average gap over iid draws from mu0: each player i
            // is scored at its own state and the empirical measure of the
            // other n-1 players (a grid point, so U is already in hand)
            double avg = 0.0;
            const rng::Stream cell = root.fork(static_cast<std::uint64_t>(n));
            for (int rep = 0; rep < c.reps; ++rep) {
                const std::vector<int> states =
                    initial_states(n, mu0, InitMode::Iid, cell.bits(rep));
                std::vector<int> counts(model.d, 0);
                for (int s : states) ++counts[s];
                double sample = 0.0;
                for (int i = 0; i < n; ++i) {
                    const int x = states[i];
                    --counts[x];
                    const long long r = v.grid.rank_counts(counts);
                    ++counts[x];
                    sample += std::abs(v.value(0, x, r) -
                                       U[static_cast<std::size_t>(r) * model.d + x]) / n;
                }
                avg += sample / c.reps;
            }
            rows.push_back({{"n", n}, {"sup_gap", sup}, {"avg_gap", avg}, {"status", "ok"}});
            table << n << "," << sup << "," << avg << ",ok\n";
            ns_ok.push_back(n);
            sups.push_back(sup);
            avgs.push_back(avg);
            std::printf("converge   n=%-4d sup gap %.6e   iid avg gap %.6e\n", n, sup, avg);
        } catch (const CapacityError& e) {
            rows.push_back({{"n", n}, {"status", "capacity-error"}, {"error", e.what()}});
            table << n << ",,,capacity-error\n";
            std::printf("converge   n=%-4d capacity error: %s\n", n, e.what());
            failed = true;
        }
    }
    const double slope_sup = slope_or_nan(ns_ok, sups);
    const double slope_avg = slope_or_nan(ns_ok, avgs);
    table << "# slope_sup " << slope_sup << "\n# slope_avg " << slope_avg << "\n";
    write_report(c, "converge.json",
                 json{{"rows", rows},
                      {"slope_sup_gap", json_slope(slope_sup)},
                      {"slope_avg_gap", json_slope(slope_avg)}},
                 cfg);
    std::printf("converge   slope: sup %.3f   avg %.3f\n", slope_sup, slope_avg);
    return failed ? 1 : 0;
}

int run_coupling(const RunConfig& c, const ModelSpec& model, const json& cfg) {
    const Vec mu0 = start_measure(c, model);
    const rng::Stream root(c.seed);
    std::ofstream table = open_artifact(c, "coupling.csv");
    provenance(table, cfg);
    table << "n,mean_sup_gap,median_sup_gap,mean_decoupled_fraction\n";
    json rows = json::array();
    std::vector<double> ns, means;
    for (int n : c.ns) {
        const double dt = c.dt > 0 ? c.dt : model.T / 2000;
        const ValueGrid v = solve_hjb_n(model, n, dt);
        TableBuildOptions topts;
        topts.jobs = c.jobs;
        const MasterPolicyTable mtable = MasterPolicyTable::build(model, n, topts);
        const std::vector<int> init = initial_states(n, mu0, InitMode::Deterministic);
        std::vector<double> gaps(c.reps), fracs(c.reps);
        const rng::Stream cell = root.fork(static_cast<std::uint64_t>(n));
        parallel_for(gaps.size(), c.jobs, [&](std::size_t rep) {
            const TrajectoryRecord rec =
                simulate_coupled(model, n, v, mtable, init, cell.bits(rep));
            const auto [gap, frac] = coupling_gap(rec);
            gaps[rep] = gap;
            fracs[rep] = frac;
        });
        const double mean = stats::mean(gaps);
        const double median = stats::percentile(gaps, 0.5);
        const double frac = stats::mean(fracs);
        rows.push_back({{"n", n},
                        {"mean_sup_gap", mean},
                        {"median_sup_gap", median},
                        {"mean_decoupled_fraction", frac}});
        table << n << "," << mean << "," << median << "," << frac << "\n";
        ns.push_back(n);
        means.push_back(mean);
        std::printf("coupling   n=%-4d mean sup gap %.6e   median %.6e   decoupled %.3f\n", n,
                    mean, median, frac);
    }
    const double slope = slope_or_nan(ns, means);
    table << "# slope_mean " << slope << "\n";
    write_report(c, "coupling.json", json{{"rows", rows}, {"slope_mean_gap", json_slope(slope)}},
                 cfg);
    std::printf("coupling   slope of mean gap: %.3f\n", slope);
    return 0;
}

int run_fluctuations(const RunConfig& c, const ModelSpec& model, const json& cfg) {
    const Vec mu0 = start_measure(c, model);
    const int n = *std::max_element(c.ns.begin(), c.ns.end());
    const int M = c.reps;
    const rng::Stream root(c.seed);

    TableBuildOptions topts;
    topts.jobs = c.jobs;
    const MasterPolicyTable table = MasterPolicyTable::build(model, n, topts);
    const std::vector<Vec> emp = empirical_fluctuation(model, table, n, M, mu0, c.seed, c.jobs);

    const FBSolution flow = mfg_flow(model, mu0);
    const SdeCoeffs coeffs = SdeCoeffs::build(model, flow);
    const double dt = c.dt > 0 ? c.dt : 1e-3;
    std::vector<Vec> sde(M);
    const rng::Stream cell = root.fork(0x5de);
    parallel_for(sde.size(), c.jobs, [&](std::size_t rep) {
        sde[rep] = integrate_sde(coeffs, Vec(model.d, 0.0), dt, cell.bits(rep)).psi.back();
    });

    std::ofstream samples = open_artifact(c, "fluctuation_samples.csv");
    provenance(samples, cfg);
    samples << "kind,rep";
    for (int x = 0; x < model.d; ++x) samples << ",psi_" << x;
    samples << "\n";
    for (int rep = 0; rep < M; ++rep) {
        samples << "empirical," << rep;
        for (double w : emp[rep]) samples << "," << w;
        samples << "\n";
    }
    for (int rep = 0; rep < M; ++rep) {
        samples << "sde," << rep;
        for (double w : sde[rep]) samples << "," << w;
        samples << "\n";
    }

    json per_component = json::array();
    bool pass = true;
    for (int x = 0; x < model.d; ++x) {
        std::vector<double> e, s;
        for (const Vec& w : emp) e.push_back(w[x]);
        for (const Vec& w : sde) s.push_back(w[x]);
        const double rel =
            std::abs(stats::sample_sd(e) - stats::sample_sd(s)) / stats::sample_sd(s);
        const double ze = std::abs(stats::mean(e)) / stats::standard_error(e);
        const double zs = std::abs(stats::mean(s)) / stats::standard_error(s);
        pass = pass && rel <= c.sd_tolerance && ze <= 4.0 && zs <= 4.0;
        per_component.push_back({{"component", x},
                                 {"empirical_mean", stats::mean(e)},
                                 {"empirical_sd", stats::sample_sd(e)},
                                 {"sde_mean", stats::mean(s)},
                                 {"sde_sd", stats::sample_sd(s)},
                                 {"sd_rel_err", rel},
                                 {"mean_over_se", std::max(ze, zs)}});
        std::printf("fluct      psi_%d  sd emp %.4f vs sde %.4f (rel %.3f)   |mean|/SE %.2f\n", x,
                    stats::sample_sd(e), stats::sample_sd(s), rel, std::max(ze, zs));
    }
    write_report(c, "fluctuations.json",
                 json{{"n", n},
                      {"reps", M},
                      {"per_component", per_component},
                      {"empirical_cov", stats::covariance(emp)},
                      {"sde_cov", stats::covariance(sde)},
                      {"sd_tolerance", c.sd_tolerance},
                      {"pass", pass}},
                 cfg);
    std::printf("fluct      n=%d M=%d: %s (sd tolerance %.2f)\n", n, M, pass ? "PASS" : "FAIL",
                c.sd_tolerance);
    return 0;
}

int run_residual(const RunConfig& c, const ModelSpec& model, const json& cfg) {
    const rng::Stream draw(c.seed);
    std::ofstream table = open_artifact(c, "residual_samples.csv");
    provenance(table, cfg);
    table << "t,x";
    for (int z = 0; z < model.d; ++z) table << ",eta_" << z;
    table << ",residual\n";
    std::vector<double> abs_res;
    std::uint64_t idx = 0;
    for (int i = 0; i < c.residual_points; ++i) {
        const double t = (0.05 + 0.9 * draw.u01(idx++)) * model.T;
        Vec eta(model.d);
        double mass = 0.0;
        for (int z = 0; z < model.d; ++z) mass += (eta[z] = 0.05 + draw.u01(idx++));
        for (double& w : eta) w /= mass;
        const int x = static_cast<int>(draw.u01(idx++) * model.d);
        const double r = master_residual(model, t, x, eta, 1e-4, c.dt, c.tol);
        abs_res.push_back(std::abs(r));
        table << t << "," << x;
        for (double w : eta) table << "," << w;
        table << "," << r << "\n";
    }
    const double worst = *std::max_element(abs_res.begin(), abs_res.end());
    const double median = stats::percentile(abs_res, 0.5);
    write_report(c, "residual.json",
                 json{{"points", c.residual_points}, {"max_abs", worst}, {"median_abs", median}},
                 cfg);
    std::printf("residual   %d points: max |r| %.3e   median %.3e\n", c.residual_points, worst,
                median);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-state mean-field game experiment driver"};
    std::string config_path, model_path, experiment, out_dir, record_level;
    std::vector<int> ns;
    int reps = 0, jobs = 0;
    std::uint64_t seed = 0;
    double dt = 0.0, tol = 0.0;
    app.add_option("--config", config_path, "JSON run configuration (schema in README)");
    app.add_option("--model", model_path, "model JSON (overrides the config's model)");
    app.add_option("--experiment", experiment,
                   "solve-hjb | solve-mfg | simulate | converge | coupling | fluctuations | "
                   "residual");
    app.add_option("--n", ns, "player counts, e.g. --n 4,8,16")->delimiter(',');
    app.add_option("--reps", reps, "replications per cell");
    app.add_option("--seed", seed, "root seed (all randomness derives from it)");
    app.add_option("--jobs", jobs, "worker threads for (n, rep) cells");
    app.add_option("--out", out_dir, "output directory for CSV/JSON artifacts");
    app.add_option("--record-level", record_level, "events | measures | summary");
    app.add_option("--dt", dt, "solver step override (<= 0: module defaults)");
    app.add_option("--tol", tol, "fixed-point tolerance override");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems are exit 2, --help is 0
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : config_from_file(config_path);
        if (app.count("--model")) cfg.model_path = model_path;
        if (app.count("--experiment")) cfg.experiment = experiment;
        if (app.count("--n")) cfg.ns = ns;
        if (app.count("--reps")) cfg.reps = reps;
        if (app.count("--seed")) cfg.seed = seed;
        if (app.count("--jobs")) cfg.jobs = jobs;
        if (app.count("--out")) cfg.out_dir = out_dir;
        if (app.count("--record-level")) cfg.record_level = record_level;
        if (app.count("--dt")) cfg.dt = dt;
        if (app.count("--tol")) cfg.tol = tol;
        validate(cfg);

        const ModelSpec model = load_model(cfg.model_path);
        fs::create_directories(cfg.out_dir);
        const json resolved = resolved_config(cfg);

        if (cfg.experiment == "solve-hjb") return run_solve_hjb(cfg, model, resolved);
        if (cfg.experiment == "solve-mfg") return run_solve_mfg(cfg, model, resolved);
        if (cfg.experiment == "simulate") return run_simulate(cfg, model, resolved);
        if (cfg.experiment == "converge") return run_converge(cfg, model, resolved);
        if (cfg.experiment == "coupling") return run_coupling(cfg, model, resolved);
        if (cfg.experiment == "fluctuations") return run_fluctuations(cfg, model, resolved);
        return run_residual(cfg, model, resolved);
    } catch (const InvalidInput& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 1;
    }
}
