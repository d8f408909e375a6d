import csv
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridtd.cosim import run_simulation
from hybridtd.metrics import ace_std, compare_runs, emit_outputs, read_summary, read_table, system_ace
from hybridtd.scenario.experiments import build_experiment


@pytest.fixture(scope="module")
def weak_run():
    return run_simulation(build_experiment("weak-feeder-high-tc", horizon=40.0))


def test_ace_std_examples():
    assert ace_std([-1.0, 1.0]) == 1.0
    assert ace_std([2.5] * 10) == 0.0
    with pytest.raises(ValueError):
        ace_std([])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200), st.floats(-1e3, 1e3))
def test_ace_std_shift_invariant(xs, c):
    x = np.array(xs)
    assert ace_std(x + c) == pytest.approx(ace_std(x), abs=1e-6)


def test_system_ace_sums_magnitudes():
    assert np.array_equal(system_ace([np.array([1.0, -2.0]), np.array([-3.0, 0.5])]), [4.0, 2.5])


def test_csv_recomputation(tmp_path, weak_run):
    emit_outputs(weak_run, tmp_path)
    tab = read_table(tmp_path / "ace.csv")
    s = read_summary(tmp_path / "summary.txt")
    assert abs(ace_std(tab["ace_system"]) - s["ace_std_system"]) < 1e-12
    for a in weak_run.areas:
        assert abs(ace_std(tab[f"ace_area{a}"]) - s[f"ace_std_area{a}"]) < 1e-12
    freq = read_table(tmp_path / "frequency.csv")
    assert abs(np.max(np.abs(freq["df_system_hz"])) - s["max_abs_df_hz"]) < 1e-12


def test_violation_rows_match_summary(tmp_path, weak_run):
    emit_outputs(weak_run, tmp_path)
    with open(tmp_path / "violations.csv") as fh:
        rows = list(csv.DictReader(fh))
    s = read_summary(tmp_path / "summary.txt")
    assert len(rows) == s["violation_count"] > 0
    assert all(float(r["v_pu"]) < 0.95 or float(r["v_pu"]) > 1.05 for r in rows)
    keyed = {(r["time"], r["node"], r["phase"]) for r in rows}
    assert len(keyed) == len(rows)


def test_manifest_stable_across_reruns(tmp_path, weak_run):
    again = run_simulation(build_experiment("weak-feeder-high-tc", horizon=40.0))
    emit_outputs(weak_run, tmp_path / "a")
    emit_outputs(again, tmp_path / "b")
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma == mb
    listed = {f["file"] for f in ma["files"]}
    assert {"ace.csv", "frequency.csv", "pcc.csv", "bess.csv", "voltage.csv", "coupling.csv",
            "violations.csv", "summary.txt", "events.json"} <= listed
    assert any(f.startswith("plots/") for f in listed)


def test_compare_infers_direction():
    a = {"steps": 10, "bess_scheme": "equal", "ace_std_system": 0.1}
    b = {"steps": 10, "bess_scheme": "none", "ace_std_system": 0.2}
    cmp = compare_runs(a, b)
    assert cmp.passed and cmp.checks[0][1] == "a<b"
    assert not compare_runs(dict(a, ace_std_system=0.3), b).passed
    assert "FAIL" in compare_runs(dict(a, ace_std_system=0.3), b).format()
    assert compare_runs(b, a).checks[0][1] == "b<a"


def test_compare_no_expectation_when_many_keys_differ():
    a = {"steps": 5, "bess_scheme": "equal", "vi": "low", "ace_std_system": 1.0}
    b = {"steps": 5, "bess_scheme": "none", "vi": "high", "ace_std_system": 0.5}
    assert compare_runs(a, b).checks == [] and compare_runs(a, b).passed


def test_compare_rejects_mismatched_horizons():
    with pytest.raises(ValueError, match="horizons"):
        compare_runs({"steps": 5}, {"steps": 6})
