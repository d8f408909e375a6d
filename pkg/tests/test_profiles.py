import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridtd.errors import ProfileParseError
from hybridtd.scenario.profiles import (Profile, clear_sky, clear_sky_profile, cloud_mask, cloudy,
                                        generate_load_profile, generate_pv_profile, load_profiles,
                                        read_profile, variability_index, write_profile)


def _write(path, body):
    path.write_text(body)
    return path


def test_constant_profile_identity(tmp_path):
    p = _write(tmp_path / "c.txt", "# id: c\n# kind: load\n# interval: 1\n" + "1.0\n" * 5)
    prof = read_profile(p)
    assert np.array_equal(prof.samples, np.ones(5))


def test_hour_at_one_second_has_3600_samples():
    assert len(clear_sky_profile().samples) == 3600


def test_zero_order_hold_resampling(tmp_path):
    p = _write(tmp_path / "z.txt", "# id: z\n# kind: pv\n# interval: 10\n0.1\n0.2\n0.3\n")
    prof = load_profiles(p, dt=1.0)["z"]
    assert prof.interval == 1.0
    assert np.array_equal(prof.samples, np.repeat([0.1, 0.2, 0.3], 10))


def test_timestamped_samples(tmp_path):
    p = _write(tmp_path / "t.txt", "# id: t\n# kind: load\n0 1.0\n2 1.1\n4 1.2\n")
    prof = read_profile(p)
    assert prof.interval == 2.0 and prof.start == 0.0


@pytest.mark.parametrize("body, line, match", [
    ("# id: n\n# kind: pv\n# interval: 1\n0.5\n-0.1\n", 5, "negative"),
    ("# id: n\n# kind: pv\n0 0.5\n1 0.5\n3 0.5\n", 5, "non-uniform"),
    ("# id: n\n# kind: pv\n# interval: 1\n0.5\nabc\n", 5, "not a number"),
    ("# kind: pv\n# interval: 1\n0.5\n", 1, "id"),
    ("# id: n\n# kind: wind\n# interval: 1\n0.5\n", 1, "kind"),
    ("# id: n\n# kind: pv\n# interval: 1\n0.5\nnan\n", 5, "finite"),
])
def test_parse_errors_carry_line_numbers(tmp_path, body, line, match):
    p = _write(tmp_path / "bad.txt", body)
    with pytest.raises(ProfileParseError, match=match) as err:
        read_profile(p)
    assert err.value.line == line
    assert f"bad.txt:{line}:" in str(err.value)


def test_duplicate_ids_rejected(tmp_path):
    for k in range(2):
        _write(tmp_path / f"p{k}.txt", "# id: same\n# kind: pv\n# interval: 1\n1\n")
    with pytest.raises(ValueError, match="duplicate"):
        load_profiles(tmp_path)


@settings(max_examples=30)
@given(st.lists(st.floats(0.0, 10.0), min_size=2, max_size=400), st.sampled_from([1.0, 5.0, 60.0]))
def test_profile_round_trip(tmp_path_factory, values, interval):
    d = tmp_path_factory.mktemp("rt")
    prof = Profile("r", "pv", interval, values, 1234.5, {"note": "x"})
    write_profile(prof, d / "r.txt")
    again = read_profile(d / "r.txt")
    assert np.array_equal(again.samples, prof.samples)
    assert (again.id, again.kind, again.interval, again.start, again.meta) == \
        (prof.id, prof.kind, prof.interval, prof.start, prof.meta)


def test_vi_constant_and_zero():
    assert variability_index(np.full(100, 0.7), 1.0) == 1.0
    assert variability_index(np.zeros(100), 1.0) == 1.0


def _brute_vi(x, interval, window_s=600.0):
    n = len(x)
    w = int(round(window_s / interval))
    half = w // 2
    ref = []
    for k in range(n):
        acc = 0.0
        for j in range(k - half, k - half + w):
            acc += x[min(max(j, 0), n - 1)]
        ref.append(acc / w)
    peak = max(abs(v) for v in x)
    dt = interval / 60.0

    def length(y):
        total = 0.0
        for k in range(1, n):
            dp = (y[k] - y[k - 1]) * 100.0 / peak
            total += (dp * dp + dt * dt) ** 0.5
        return total

    return length(list(x)) / length(ref)


def test_vi_matches_direct_path_length_on_square_wave():
    t = np.arange(1800)
    x = 0.8 + 0.1 * np.sign(np.sin(2 * np.pi * t / 17.0))
    assert variability_index(x, 1.0) == pytest.approx(_brute_vi(x, 1.0), rel=1e-12)


@settings(max_examples=25)
@given(st.lists(st.floats(0.0, 1.0), min_size=30, max_size=300))
def test_vi_at_least_one(values):
    assert variability_index(np.array(values), 10.0) >= 1.0 - 1e-12


def test_clear_sky_shape():
    assert clear_sky(12 * 3600.0) == pytest.approx(1.0)
    assert clear_sky(5 * 3600.0) == 0.0
    assert clear_sky(18 * 3600.0) == pytest.approx(0.0)


@pytest.mark.parametrize("target", [1.33, 6.29, 15.58])
def test_generated_profiles_hit_targets(target):
    prof = generate_pv_profile(target, seed=1)
    assert abs(variability_index(prof) - target) <= 0.02 * target
    assert np.all(prof.samples >= 0)


def test_generation_deterministic_per_seed():
    a = generate_pv_profile(6.29, seed=4)
    b = generate_pv_profile(6.29, seed=4)
    c = generate_pv_profile(6.29, seed=5)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_target_one_returns_clear_sky():
    base = clear_sky_profile()
    prof = generate_pv_profile(1.0, seed=0)
    assert np.allclose(prof.samples, base.samples, atol=1e-3)
    assert variability_index(prof) == pytest.approx(1.0, rel=0.02)


def test_unreachable_target_reports_maximum():
    with pytest.raises(ValueError, match="maximum is"):
        generate_pv_profile(500.0, seed=1)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_vi_monotone_in_cloud_depth(seed):
    base = clear_sky_profile()
    mask = cloud_mask(len(base.samples), 1.0, seed)
    vis = [variability_index(cloudy(base.samples, mask, d), 1.0) for d in np.linspace(0, 1, 101)]
    assert np.all(np.diff(vis) >= 0)


def test_load_profile_positive_and_seeded():
    a = generate_load_profile(seed=3)
    assert a.kind == "load" and np.all(a.samples > 0.9)
    assert np.array_equal(a.samples, generate_load_profile(seed=3).samples)
