// Python bindings: the model layer, both solvers, the simulator, and the
// fluctuation SDE — enough to drive every experiment from python. Vectors
// cross the boundary as plain lists (copied); the heavy state (value grids,
// policy tables, solved flows) stays behind opaque handles.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fsmfg/fluctuations.hpp"
#include "fsmfg/hjb_n.hpp"
#include "fsmfg/master.hpp"
#include "fsmfg/model.hpp"
#include "fsmfg/simplex.hpp"
#include "fsmfg/simulate.hpp"

namespace py = pybind11;
using namespace mfg;

PYBIND11_MODULE(_fsmfg, m) {
    m.doc() = "finite-state mean-field games: solvers, simulation, fluctuations";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
    py::register_exception<InfeasibleShift>(m, "InfeasibleShift", PyExc_RuntimeError);
    py::register_exception<NonConvergence>(m, "NonConvergence", PyExc_RuntimeError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    // ------------------------------------------------------------- model
    py::enum_<CostFamily>(m, "CostFamily")
        .value("Zero", CostFamily::Zero)
        .value("Linear", CostFamily::Linear);

    py::class_<CostSpec>(m, "CostSpec")
        .def(py::init<>())
        .def(py::init([](CostFamily family, double scale) {
                 CostSpec c;
                 c.family = family;
                 c.scale = scale;
                 return c;
             }),
             py::arg("family"), py::arg("scale") = 1.0)
        .def_readwrite("family", &CostSpec::family)
        .def_readwrite("scale", &CostSpec::scale)
        .def("value", &CostSpec::value, py::arg("r"))
        .def("slope", &CostSpec::slope, py::arg("r"));

    py::class_<ModelSpec>(m, "ModelSpec")
        .def(py::init<>())
        .def_readwrite("d", &ModelSpec::d)
        .def_readwrite("T", &ModelSpec::T)
        .def_readwrite("b1", &ModelSpec::b1)
        .def_readwrite("c", &ModelSpec::c)
        .def_readwrite("f2", &ModelSpec::f2)
        .def_readwrite("g", &ModelSpec::g)
        .def_readwrite("a_lo", &ModelSpec::a_lo)
        .def_readwrite("a_hi", &ModelSpec::a_hi)
        .def("f2_at", &ModelSpec::f2_at, py::arg("x"), py::arg("eta"))
        .def("g_at", &ModelSpec::g_at, py::arg("x"), py::arg("eta"))
        .def("check", &ModelSpec::check)
        .def("__repr__", [](const ModelSpec& spec) { return model_to_json(spec); });

    m.def("model_from_json", &model_from_json, py::arg("json_text"));
    m.def("load_model", &load_model, py::arg("path"));
    m.def("model_to_json", &model_to_json, py::arg("model"));

    py::class_<ValidationCheck>(m, "ValidationCheck")
        .def_readonly("name", &ValidationCheck::name)
        .def_readonly("passed", &ValidationCheck::pass)
        .def_readonly("worst", &ValidationCheck::worst)
        .def_readonly("detail", &ValidationCheck::detail);
    py::class_<ValidationReport>(m, "ValidationReport")
        .def_readonly("checks", &ValidationReport::checks)
        .def_readonly("all_pass", &ValidationReport::all_pass);
    m.def("validate_model", &validate_model, py::arg("model"), py::arg("samples") = 200,
          py::arg("seed") = 1);

    py::class_<RateVector>(m, "RateVector")
        .def_readonly("base", &RateVector::base)
        .def_readonly("rates", &RateVector::rates);
    m.def("optimal_rates", &optimal_rates, py::arg("model"), py::arg("x"), py::arg("p"));
    m.def("hamiltonian_H1", &hamiltonian_H1, py::arg("model"), py::arg("x"), py::arg("p"));
    m.def("running_cost", &running_cost, py::arg("model"), py::arg("x"), py::arg("eta"),
          py::arg("a"));

    // ------------------------------------------------------------ simplex
    py::class_<SimplexGrid>(m, "SimplexGrid")
        .def_static("enumerate", &SimplexGrid::enumerate, py::arg("d"), py::arg("m"),
                    py::arg("cap") = 20'000'000)
        .def_property_readonly("d", &SimplexGrid::d)
        .def_property_readonly("m", &SimplexGrid::m)
        .def("__len__", &SimplexGrid::size)
        .def("size", &SimplexGrid::size)
        .def("unrank", &SimplexGrid::unrank, py::arg("r"))
        .def("unrank_counts", &SimplexGrid::unrank_counts, py::arg("r"))
        .def("rank", &SimplexGrid::rank, py::arg("eta"))
        .def("rank_counts", &SimplexGrid::rank_counts, py::arg("counts"));

    // ----------------------------------------------------- n-player value
    py::class_<ValueGrid>(m, "ValueGrid")
        .def_readonly("n", &ValueGrid::n)
        .def_readonly("dt", &ValueGrid::dt)
        .def_readonly("K", &ValueGrid::K)
        .def_property_readonly(
            "grid", [](const ValueGrid& v) -> const SimplexGrid& { return v.grid; },
            py::return_value_policy::reference_internal)
        .def("value", &ValueGrid::value, py::arg("k"), py::arg("x"), py::arg("r"))
        .def("value_at", &ValueGrid::value_at, py::arg("t"), py::arg("x"), py::arg("r"))
        .def("delta_x", &ValueGrid::delta_x, py::arg("t"), py::arg("x"), py::arg("r"));
    m.def(
        "solve_hjb_n",
        [](const ModelSpec& model, int n, double dt, long long cap) {
            return solve_hjb_n(model, n, dt > 0 ? dt : model.T / 2000, cap);
        },
        py::arg("model"), py::arg("n"), py::arg("dt") = -1.0, py::arg("cap") = 20'000'000);
    m.def("equilibrium_policy", &equilibrium_policy, py::arg("vgrid"), py::arg("t"), py::arg("x"),
          py::arg("eta_other"));

    // ------------------------------------------------------ master layer
    py::class_<FBSolution>(m, "FBSolution")
        .def_readonly("t0", &FBSolution::t0)
        .def_readonly("T", &FBSolution::T)
        .def_readonly("dt", &FBSolution::dt)
        .def_readonly("K", &FBSolution::K)
        .def_readonly("u", &FBSolution::u)
        .def_readonly("mu", &FBSolution::mu)
        .def_readonly("iterations", &FBSolution::iterations)
        .def_readonly("residual", &FBSolution::residual)
        .def("u_at", &FBSolution::u_at, py::arg("t"))
        .def("mu_at", &FBSolution::mu_at, py::arg("t"));
    m.def(
        "solve_fb",
        [](const ModelSpec& model, double t0, const Vec& mu0, double dt, double tol,
           double damping) {
            FBOptions opts;
            opts.dt = dt;
            opts.tol = tol;
            opts.damping = damping;
            return solve_fb(model, t0, mu0, opts);
        },
        py::arg("model"), py::arg("t0"), py::arg("mu0"), py::arg("dt") = -1.0,
        py::arg("tol") = 1e-9, py::arg("damping") = 0.5);
    m.def("mfg_flow", &mfg_flow, py::arg("model"), py::arg("mu0"), py::arg("dt") = -1.0,
          py::arg("tol") = 1e-9);
    m.def("master_U", &master_U, py::arg("model"), py::arg("t0"), py::arg("x"), py::arg("eta"),
          py::arg("dt") = -1.0, py::arg("tol") = 1e-9);
    m.def("grad_eta_U", &grad_eta_U, py::arg("model"), py::arg("t0"), py::arg("x"),
          py::arg("eta"), py::arg("dt") = -1.0, py::arg("tol") = 1e-9,
          py::arg("lin_tol") = 1e-12);
    m.def("master_residual", &master_residual, py::arg("model"), py::arg("t"), py::arg("x"),
          py::arg("eta"), py::arg("fd_step") = 1e-4, py::arg("dt") = -1.0,
          py::arg("tol") = 1e-9);

    py::class_<MasterPolicyTable>(m, "MasterPolicyTable")
        .def_static(
            "build",
            [](const ModelSpec& model, int n, int knots, double dt_fb, double tol, int jobs) {
                TableBuildOptions opts;
                opts.knots = knots;
                opts.dt_fb = dt_fb;
                opts.tol = tol;
                opts.jobs = jobs;
                return MasterPolicyTable::build(model, n, opts);
            },
            py::arg("model"), py::arg("n"), py::arg("knots") = 129, py::arg("dt_fb") = -1.0,
            py::arg("tol") = 1e-8, py::arg("jobs") = 1)
        .def_property_readonly("n", &MasterPolicyTable::n)
        .def_property_readonly(
            "grid", [](const MasterPolicyTable& t) -> const SimplexGrid& { return t.grid(); },
            py::return_value_policy::reference_internal)
        .def("U", &MasterPolicyTable::U, py::arg("t"), py::arg("x"), py::arg("r"))
        .def("knot_dt", &MasterPolicyTable::knot_dt);

    // ---------------------------------------------------------- simulator
    py::enum_<InitMode>(m, "InitMode")
        .value("Deterministic", InitMode::Deterministic)
        .value("Iid", InitMode::Iid);
    m.def("initial_states", &initial_states, py::arg("n"), py::arg("mu0"), py::arg("mode"),
          py::arg("seed") = 0);

    py::class_<Event>(m, "Event")
        .def_readonly("t", &Event::t)
        .def_readonly("player", &Event::player)
        .def_readonly("from_state", &Event::from)
        .def_readonly("to_state", &Event::to)
        .def_readonly("system", &Event::system);

    py::class_<TrajectoryRecord>(m, "TrajectoryRecord")
        .def_readonly("n", &TrajectoryRecord::n)
        .def_readonly("d", &TrajectoryRecord::d)
        .def_readonly("T", &TrajectoryRecord::T)
        .def_readonly("coupled", &TrajectoryRecord::coupled)
        .def_readonly("events", &TrajectoryRecord::events)
        .def_readonly("times", &TrajectoryRecord::times)
        .def_readonly("mu_counts", &TrajectoryRecord::mu_counts)
        .def_readonly("nu_counts", &TrajectoryRecord::nu_counts)
        .def_readonly("arrivals", &TrajectoryRecord::arrivals)
        .def_readonly("departures", &TrajectoryRecord::departures)
        .def_readonly("decouple_times", &TrajectoryRecord::decouple_times)
        .def_readonly("candidates", &TrajectoryRecord::candidates)
        .def("mu_at", &TrajectoryRecord::mu_at, py::arg("t"))
        .def("nu_at", &TrajectoryRecord::nu_at, py::arg("t"));

    py::class_<PolicySpec>(m, "PolicySpec")
        .def_static("constant", &PolicySpec::constant, py::arg("rates"))
        .def_static("nash", &PolicySpec::nash, py::arg("vgrid"), py::keep_alive<0, 1>())
        .def_static("master", &PolicySpec::master, py::arg("table"), py::keep_alive<0, 1>());

    m.def("simulate", &simulate, py::arg("model"), py::arg("n"), py::arg("policy"),
          py::arg("init"), py::arg("seed"));
    m.def("simulate_coupled", &simulate_coupled, py::arg("model"), py::arg("n"),
          py::arg("vgrid"), py::arg("table"), py::arg("init"), py::arg("seed"));
    m.def("coupling_gap", &coupling_gap, py::arg("record"));
    m.def("sharp_measure", &sharp_measure, py::arg("eta"), py::arg("n"), py::arg("x"));

    py::class_<MartingalePaths>(m, "MartingalePaths")
        .def_readonly("times", &MartingalePaths::times)
        .def_readonly("M", &MartingalePaths::M)
        .def_readonly("N", &MartingalePaths::N);
    m.def("martingale_paths", &martingale_paths, py::arg("model"), py::arg("record"),
          py::arg("policy"), py::arg("dt_quad") = -1.0);

    // -------------------------------------------------------- fluctuations
    m.def("lambda_sigma", &lambda_sigma, py::arg("model"), py::arg("t"), py::arg("eta"),
          py::arg("dt") = -1.0, py::arg("tol") = 1e-9);
    m.def("grad_eta_alpha", &grad_eta_alpha, py::arg("model"), py::arg("t"), py::arg("mu"),
          py::arg("fd_step") = 1e-4, py::arg("dt") = -1.0, py::arg("tol") = 1e-9);

    py::class_<SdeCoeffs>(m, "SdeCoeffs")
        .def_static("build", &SdeCoeffs::build, py::arg("model"), py::arg("flow"),
                    py::arg("knots") = 201, py::arg("fd_step") = 1e-4, py::arg("dt_fb") = -1.0,
                    py::arg("tol") = 1e-9)
        .def_readonly("dt", &SdeCoeffs::dt)
        .def_readonly("K", &SdeCoeffs::K)
        .def_readonly("mu", &SdeCoeffs::mu)
        .def_readonly("lambda_", &SdeCoeffs::lambda)
        .def_readonly("sigma", &SdeCoeffs::sigma)
        .def_readonly("alpha", &SdeCoeffs::alpha)
        .def_readonly("grad", &SdeCoeffs::grad);

    py::class_<SdeFlags>(m, "SdeFlags")
        .def(py::init<>())
        .def_readwrite("noise", &SdeFlags::noise)
        .def_readwrite("drift", &SdeFlags::drift);

    py::class_<FluctuationPath>(m, "FluctuationPath")
        .def_readonly("times", &FluctuationPath::times)
        .def_readonly("psi", &FluctuationPath::psi)
        .def_readonly("dW", &FluctuationPath::dW);

    m.def(
        "integrate_sde",
        [](const SdeCoeffs& coeffs, const Vec& psi0, double dt, std::uint64_t seed,
           const SdeFlags& flags) { return integrate_sde(coeffs, psi0, dt, seed, flags); },
        py::arg("coeffs"), py::arg("psi0"), py::arg("dt"), py::arg("seed"),
        py::arg("flags") = SdeFlags{});
    m.def(
        "integrate_sde",
        [](const ModelSpec& model, const FBSolution& flow, const Vec& psi0, double dt,
           std::uint64_t seed, int coeff_knots, double fd_step) {
            return integrate_sde(model, flow, psi0, dt, seed, coeff_knots, fd_step);
        },
        py::arg("model"), py::arg("flow"), py::arg("psi0"), py::arg("dt"), py::arg("seed"),
        py::arg("coeff_knots") = 201, py::arg("fd_step") = 1e-4);
    m.def("empirical_fluctuation", &empirical_fluctuation, py::arg("model"), py::arg("table"),
          py::arg("n"), py::arg("M"), py::arg("mu0"), py::arg("seed"), py::arg("jobs") = 1,
          py::arg("flow_dt") = -1.0);
}
