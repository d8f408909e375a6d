import json

import numpy as np
import pytest
from scipy.optimize import fsolve

from hybridtd.errors import ConfigurationError, ConvergenceError, SimulationAbort
from hybridtd.transmission import kernel
from hybridtd.transmission.case import TransmissionSystem, default_case, load_case, save_case
from hybridtd.transmission.dynamics import TransmissionModel
from hybridtd.transmission.powerflow import area_export, build_ybus, solve_power_flow, solve_with_interchange


@pytest.fixture(scope="module")
def system():
    return default_case()


@pytest.fixture(scope="module")
def model(system):
    return TransmissionModel(system)


def test_case_round_trip(tmp_path, system):
    save_case(system, tmp_path / "c.json")
    again = load_case(tmp_path / "c.json")
    assert again.to_dict() == system.to_dict()


def test_default_case_totals(system):
    assert sum(ld.p_mw for ld in system.loads) == pytest.approx(315.0)
    assert sorted(system.pcc_buses) == [5, 6, 8]
    assert system.area_schedule(2) == pytest.approx(3.0)


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d["buses"].__setitem__(1, dict(d["buses"][1], type="slack")), "slack"),
    (lambda d: d["branches"].pop(0), "not connected"),
    (lambda d: d["areas"][0]["buses"].remove(7), "without area"),
    (lambda d: d["generators"][1].__setitem__("R", 0.0), "R"),
])
def test_invalid_cases_rejected(system, mutate, message):
    data = json.loads(json.dumps(system.to_dict()))
    mutate(data)
    with pytest.raises(ConfigurationError, match=message):
        TransmissionSystem.from_dict(data)


def test_power_flow_balances(system):
    res, _ = solve_with_interchange(system)
    y = build_ybus(system)
    s = res.v * np.conj(y @ res.v) * system.base_mva
    idx = system.bus_index()
    for ld in system.loads:
        assert s[idx[ld.bus]] == pytest.approx(-complex(ld.p_mw, ld.q_mvar), abs=1e-8)
    assert area_export(system, res.v, 2) == pytest.approx(3.0, abs=1e-8)
    # lossless network: generation equals load
    assert sum(res.gen_p_mw.values()) == pytest.approx(315.0, abs=1e-8)


def test_power_flow_divergence_names_a_bus(system):
    with pytest.raises(ConvergenceError) as err:
        solve_power_flow(system, loads={5: 4000 + 2000j}, max_iter=8)
    assert err.value.location is not None


def _full_network_oracle(model, state):
    """Solve Y_aug V = I_E - conj(S/V) over every bus with a generic root finder."""
    n = len(model.system.buses)
    y = np.linalg.inv(model.z_aug)
    i_e = np.zeros(n, complex)
    i_e[model.gen_bus] = model.emag * np.exp(1j * state.delta) * model.y_gen
    s = np.zeros(n, complex)
    for bus, val in state.loads.items():
        s[model.bus_idx[bus]] += val / model.system.base_mva

    def f(x):
        v = x[:n] + 1j * x[n:]
        r = y @ v - i_e + np.conj(s / v)
        return np.concatenate([r.real, r.imag])

    x0 = np.concatenate([state.v.real, state.v.imag])
    x = fsolve(f, x0, xtol=1e-12)
    return x[:n] + 1j * x[n:]


def test_reduced_network_matches_full_solve(model):
    state = model.init_steady_state()
    state.loads = dict(state.loads)
    state.loads[5] += 7.0 + 3.0j
    state.delta = state.delta + np.array([0.0, 0.02, -0.01])
    model.network_solve(state)
    assert np.max(np.abs(state.v - _full_network_oracle(model, state))) < 1e-9


def test_initial_state_is_equilibrium(model):
    state = model.init_steady_state()
    after = model.advance(state, 1e-3, 2000)
    assert np.max(np.abs(after.domega)) < 1e-10
    for a in (1, 2):
        assert abs(model.tie_line_deviation(after, a)) < 1e-7


def test_tie_deviations_cancel(model):
    state = model.init_steady_state({5: 135 + 50j})
    after = model.advance(state, 1e-3, 3000, loads={5: 140 + 50j})
    assert model.tie_line_deviation(after, 1) + model.tie_line_deviation(after, 2) == pytest.approx(0.0, abs=1e-9)


def test_droop_settles_to_analytic_value(system):
    model = TransmissionModel(system)
    state = model.init_steady_state()
    after = model.advance(state, 5e-3, 4000, loads={5: 130 + 50j})
    expected = model.composite_droop_response() * 5.0
    assert model.system_frequency(after) == pytest.approx(expected, rel=0.01)


def test_trip_raises_with_time(system):
    model = TransmissionModel(system, trip_domega=1e-4)
    state = model.init_steady_state()
    with pytest.raises(SimulationAbort) as err:
        model.advance(state, 1e-3, 5000, loads={5: 200 + 50j})
    assert 0 < err.value.time < 5.0


def test_step_dynamics_rejects_bad_dt(model):
    with pytest.raises(ValueError):
        model.step_dynamics(model.init_steady_state(), 0.0)


@pytest.mark.skipif(kernel.BACKEND != "compiled", reason="compiled kernel not built")
def test_backends_agree(system):
    fast = TransmissionModel(system, backend="compiled")
    slow = TransmissionModel(system, backend="python")
    a = fast.advance(fast.init_steady_state(), 1e-3, 500, loads={5: 131 + 52j}, agc_setpoints=[0, 1.0, -0.5])
    b = slow.advance(slow.init_steady_state(), 1e-3, 500, loads={5: 131 + 52j}, agc_setpoints=[0, 1.0, -0.5])
    assert np.max(np.abs(a.as_array() - b.as_array())) < 1e-12
    assert np.max(np.abs(a.v - b.v)) < 1e-12


def test_area_response_sums_to_composite(model):
    beta = model.area_frequency_response(1) + model.area_frequency_response(2)
    assert -1.0 / beta == pytest.approx(model.composite_droop_response())
