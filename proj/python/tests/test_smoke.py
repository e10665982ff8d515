# End-to-end smoke of the python bindings: every layer gets one cheap call
# with a known answer. The heavy numerical verification lives in the C++
# test suites; these only prove the bindings wire the layers together.
import pytest

import fsmfg


def decoupled():
    m = fsmfg.ModelSpec()
    m.d = 2
    m.T = 1.0
    m.b1 = [0.0, 0.0]
    m.c = [0.5, 0.5]
    return m  # zero-cost families: the policy ignores the measure


def coupled():
    m = decoupled()
    m.a_hi = 2.0
    m.f2 = fsmfg.CostSpec(fsmfg.CostFamily.Linear, 1.0)
    m.g = fsmfg.CostSpec(fsmfg.CostFamily.Linear, 1.0)
    return m


def test_model_json_roundtrip():
    m = coupled()
    again = fsmfg.model_from_json(fsmfg.model_to_json(m))
    assert again.d == m.d
    assert again.T == m.T
    assert again.c == m.c
    assert again.g.scale == 1.0


def test_validation_report():
    report = fsmfg.validate_model(coupled(), samples=50)
    assert report.all_pass
    assert all(check.passed for check in report.checks)


def test_invalid_model_raises():
    bad = fsmfg.ModelSpec()
    bad.d = 1
    with pytest.raises(fsmfg.InvalidInput):
        bad.check()


def test_optimal_rates_clamp_to_box():
    m = decoupled()
    a = fsmfg.optimal_rates(m, 0, [0.0, 5.0])  # -p/(2c) < a_lo: floor
    assert a.rates[1] == m.a_lo
    a = fsmfg.optimal_rates(m, 0, [0.0, -0.5])  # interior: 0.5/(2*0.5)
    assert abs(a.rates[1] - 0.5) < 1e-15


def test_decoupled_closed_form():
    m = decoupled()
    want = m.T * 0.5 * m.a_lo**2  # (T - 0) * sum_{y != x} c_y a_lo^2
    v = fsmfg.solve_hjb_n(m, 4)
    for r in range(len(v.grid)):
        for x in range(2):
            assert abs(v.value(0, x, r) - want) < 1e-8
    assert abs(fsmfg.master_U(m, 0.0, 0, [0.3, 0.7]) - want) < 1e-8


def test_flow_conserves_mass():
    flow = fsmfg.mfg_flow(coupled(), [0.25, 0.75])
    for t in (0.0, 0.3, 1.0):
        assert abs(sum(flow.mu_at(t)) - 1.0) < 1e-9


def test_simulation_is_seed_deterministic():
    m = decoupled()
    init = fsmfg.initial_states(8, [0.5, 0.5], fsmfg.InitMode.Deterministic)
    assert sorted(init) == [0] * 4 + [1] * 4
    policy = fsmfg.PolicySpec.constant([[0.0, 0.3], [0.2, 0.0]])
    a = fsmfg.simulate(m, 8, policy, init, seed=7)
    b = fsmfg.simulate(m, 8, policy, init, seed=7)
    c = fsmfg.simulate(m, 8, policy, init, seed=8)
    assert a.times == b.times
    assert a.times != c.times
    assert abs(sum(a.mu_at(m.T)) - 1.0) < 1e-12


def test_coupled_identical_policies_never_split():
    m = coupled()
    n = 6
    v = fsmfg.solve_hjb_n(m, n, dt=1e-2)
    table = fsmfg.MasterPolicyTable.build(m, n, knots=17)
    init = fsmfg.initial_states(n, [0.5, 0.5], fsmfg.InitMode.Deterministic)
    rec = fsmfg.simulate_coupled(m, n, v, table, init, seed=4)
    gap, frac = fsmfg.coupling_gap(rec)
    assert rec.coupled
    assert gap >= 0.0 and 0.0 <= frac <= 1.0


def test_sharp_measure_pointwise():
    assert fsmfg.sharp_measure([0.5, 0.5], 2, 0) == [0.0, 1.0]


def test_fluctuation_path_stays_tangent():
    m = coupled()
    flow = fsmfg.mfg_flow(m, [0.25, 0.75])
    path = fsmfg.integrate_sde(m, flow, [0.0, 0.0], 1e-2, seed=3)
    assert all(abs(p[0] + p[1]) < 1e-12 for p in path.psi)
    lam, sig = fsmfg.lambda_sigma(m, 0.0, [0.5, 0.5])
    assert abs(sum(lam) - sum(sig)) < 1e-12
