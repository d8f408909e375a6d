import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridtd.errors import ConfigurationError
from hybridtd.scenario.experiments import (SimulationSchedule, build_experiment, catalog,
                                           heterogeneous_capacities, load_experiment,
                                           parse_case_name, validate_experiment,
                                           write_experiment)
from hybridtd.distribution.sweep import solve_feeder


@pytest.fixture(scope="module")
def short():
    return build_experiment("bess-high-tc", seed=1, horizon=60.0)


def test_catalog_names_parse():
    names = catalog()
    assert "bess-high-tc" in names and "step-agc" in names
    for n in names:
        parse_case_name(n)


@pytest.mark.parametrize("bad", ["bess-extreme-tc", "nothing-high-tc", "bess-high", "x"])
def test_unknown_case(bad):
    with pytest.raises(ConfigurationError):
        parse_case_name(bad)


def test_default_preset_contents(short):
    assert len(short.feeders) == 3 and len(short.units) == 30
    assert short.schedule.coupling == "tc" and short.scenario.variability == "high"
    assert sorted(b.pcc_bus for b in short.feeders) == [5, 6, 8]
    assert sum(u.p_kw for u in short.units) == pytest.approx(300.0)


def test_no_bess_preset_has_empty_roster():
    exp = build_experiment("no-bess-low-lc", horizon=10.0)
    assert exp.units == [] and all(not b.feeder.bess for b in exp.feeders)


def test_hetero_capacities():
    caps = heterogeneous_capacities()
    assert sum(caps) == pytest.approx(100.0)
    assert max(caps) / min(caps) == pytest.approx(10.0)
    exp = build_experiment("cosim-hetero-med-tc", horizon=10.0)
    by_feeder = {}
    for u in exp.units:
        by_feeder[u.feeder] = by_feeder.get(u.feeder, 0.0) + u.p_kw
    assert all(v == pytest.approx(100.0) for v in by_feeder.values())


def test_weak_feeder_charging_pulls_lateral_below_limit():
    exp = build_experiment("weak-feeder-high-tc", horizon=10.0)
    wf = exp.feeders[0].feeder
    assert wf.nodes[-1].phases == "a" and len(wf.bess) == 10
    idle = np.abs(solve_feeder(wf, 1.01).v).min()
    full = np.abs(solve_feeder(wf, 1.01, {a.unit: -10.0 for a in wf.bess}).v).min()
    assert full < 0.95 <= idle


@given(st.sampled_from([1e-3, 2e-3, 5e-3, 1e-2]), st.sampled_from([1.0, 2.0]), st.integers(1, 5))
def test_schedule_multiples(dt_t, dt_d, k):
    s = SimulationSchedule(dt_transmission=dt_t, dt_distribution=dt_d, dt_agc=dt_d * k, horizon=60.0)
    assert s.substeps * dt_t == pytest.approx(dt_d)
    assert s.agc_every == k


@pytest.mark.parametrize("kw", [dict(dt_distribution=1.5e-3 * 7, dt_transmission=1e-3),
                                dict(dt_agc=3.5), dict(dt_agc=0.5), dict(coupling="xx"),
                                dict(tc_max_iterations=0), dict(tc_tolerance=0.0)])
def test_schedule_rejects(kw):
    with pytest.raises(ConfigurationError):
        SimulationSchedule(**kw)


def test_validate_catches_broken_references(short):
    b = short.feeders[0]
    bad = replace(short, feeders=[replace(b, load_profile="nope")] + short.feeders[1:])
    with pytest.raises(ConfigurationError, match="nope"):
        validate_experiment(bad)
    with pytest.raises(ConfigurationError, match="roster"):
        validate_experiment(replace(short, units=short.units[1:]))
    with pytest.raises(ConfigurationError, match="PCC"):
        validate_experiment(replace(short, feeders=[replace(b, pcc_bus=7)]))
    with pytest.raises(ConfigurationError, match="shorter"):
        validate_experiment(short.with_schedule(horizon=7200.0))


def test_file_round_trip(tmp_path, short):
    cfg = write_experiment(short, tmp_path)
    again = load_experiment(cfg)
    assert again.schedule == short.schedule
    assert again.controller == short.controller
    assert [u for u in again.units] == short.units
    assert [b.feeder.to_dict() for b in again.feeders] == [b.feeder.to_dict() for b in short.feeders]
    for pid, p in short.profiles.items():
        assert (again.profiles[pid].samples == p.samples).all()


def test_schema_violation_names_field(tmp_path, short):
    cfg = write_experiment(short, tmp_path)
    data = json.loads(cfg.read_text())
    data["schedule"]["coupling"] = "loose"
    cfg.write_text(json.dumps(data))
    with pytest.raises(ConfigurationError, match="schedule/coupling"):
        load_experiment(cfg)


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n "name": "x",\n oops\n}')
    with pytest.raises(ConfigurationError, match=r"c\.json:3:"):
        load_experiment(p)
