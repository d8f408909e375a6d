"""Time-series profiles, their text format and the variability index.

A profile file is a few ``# key: value`` header lines followed by one
sample per line, either ``value`` or ``time value`` (seconds). Samples
are non-negative multipliers: per-unit of rating for PV, of nominal for
load::

    # id: pv-medium
    # kind: pv
    # interval: 1.0
    # start: 43200
    0.9981
    0.9979
"""
from dataclasses import dataclass, field
from pathlib import Path
import math

import numpy as np
from scipy.ndimage import uniform_filter1d

from ..errors import ConfigurationError, ProfileParseError

KINDS = ("pv", "load")
NOON = 12 * 3600.0


@dataclass
class Profile:
    id: str
    kind: str
    interval: float
    samples: np.ndarray
    start: float = NOON
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.kind not in KINDS:
            raise ConfigurationError(f"profile {self.id}: kind must be one of {KINDS}")
        if not self.interval > 0:
            raise ConfigurationError(f"profile {self.id}: interval must be positive")
        if self.samples.ndim != 1 or len(self.samples) == 0:
            raise ConfigurationError(f"profile {self.id}: needs a 1-D, non-empty sample array")
        if not np.all(np.isfinite(self.samples)) or np.any(self.samples < 0):
            raise ConfigurationError(f"profile {self.id}: samples must be finite and >= 0")

    @property
    def duration(self):
        return self.interval * len(self.samples)

    def value_at(self, t):
        """Zero-order-hold value at ``t`` seconds after the profile start."""
        k = int(math.floor(t / self.interval + 1e-9))
        return float(self.samples[min(max(k, 0), len(self.samples) - 1)])

    def resample(self, dt, duration=None):
        """Samples on a ``dt`` grid by zero-order hold (held past the end)."""
        duration = self.duration if duration is None else duration
        n = int(round(duration / dt))
        k = np.floor(np.arange(n) * dt / self.interval + 1e-9).astype(int)
        return self.samples[np.minimum(k, len(self.samples) - 1)]


def write_profile(profile, path):
    with open(path, "w") as fh:
        fh.write(f"# id: {profile.id}\n# kind: {profile.kind}\n")
        fh.write(f"# interval: {float(profile.interval)!r}\n# start: {float(profile.start)!r}\n")
        for k, v in profile.meta.items():
            fh.write(f"# {k}: {v}\n")
        for v in profile.samples:
            fh.write(f"{float(v)!r}\n")


def _bad(path, line, message):
    return ProfileParseError(message, path=path, line=line)


def read_profile(path):
    """Parse one profile file, raising :class:`ProfileParseError` with the line number."""
    path = str(path)
    header, values, times = {}, [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].partition(":")
                if not sep:
                    raise _bad(path, lineno, "header lines look like '# key: value'")
                header[key.strip()] = val.strip()
                continue
            parts = line.replace(",", " ").split()
            try:
                nums = [float(x) for x in parts]
            except ValueError:
                raise _bad(path, lineno, f"not a number: {line!r}") from None
            if len(nums) not in (1, 2):
                raise _bad(path, lineno, "expected 'value' or 'time value'")
            val = nums[-1]
            if not math.isfinite(val):
                raise _bad(path, lineno, "sample is not finite")
            if val < 0:
                raise _bad(path, lineno, f"negative sample {val}")
            if len(nums) == 2:
                if len(times) != len(values):
                    raise _bad(path, lineno, "mixed timestamped and bare samples")
                times.append((nums[0], lineno))
            elif times:
                raise _bad(path, lineno, "mixed timestamped and bare samples")
            values.append(val)
    for key in ("id", "kind"):
        if key not in header:
            raise _bad(path, 1, f"missing '# {key}:' header")
    if not values:
        raise _bad(path, 1, "no samples")
    interval = float(header["interval"]) if "interval" in header else None
    start = float(header.get("start", NOON))
    if times:
        t0 = times[0][0]
        if len(times) > 1 and interval is None:
            interval = times[1][0] - t0
        for k, (t, lineno) in enumerate(times):
            if abs(t - t0 - k * interval) > 1e-6 * max(1.0, interval):
                raise _bad(path, lineno, f"non-uniform timestamp {t} (expected {t0 + k * interval})")
        if "start" not in header:
            start = t0
    if interval is None or interval <= 0:
        raise _bad(path, 1, "missing or non-positive '# interval:'")
    if header["kind"] not in KINDS:
        raise _bad(path, 1, f"kind must be one of {KINDS}")
    meta = {k: v for k, v in header.items() if k not in ("id", "kind", "interval", "start")}
    return Profile(header["id"], header["kind"], interval, np.array(values), start, meta)


def load_profiles(paths, dt=None, duration=None):
    """Read profile files (or directories of ``*.txt``) into ``{id: Profile}``.

    With ``dt`` every profile is resampled to that step by zero-order hold.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    files = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.txt")) if p.is_dir() else [p])
    out = {}
    for f in files:
        prof = read_profile(f)
        if prof.id in out:
            raise ConfigurationError(f"duplicate profile id {prof.id!r} in {f}")
        if dt is not None and (dt != prof.interval or duration is not None):
            prof = Profile(prof.id, prof.kind, dt, prof.resample(dt, duration), prof.start, prof.meta)
        out[prof.id] = prof
    return out


# variability --------------------------------------------------------------

def reference_profile(x, interval, window_s=600.0):
    """Centered moving average over ``window_s``, edges held at the end samples."""
    size = max(1, int(round(window_s / interval)))
    return uniform_filter1d(np.asarray(x, float), size=size, mode="nearest")


def path_length(x, interval, peak):
    """Length of the curve with value in percent of ``peak`` and time in minutes."""
    dp = np.diff(np.asarray(x, float)) * (100.0 / peak)
    dt = interval / 60.0
    return float(np.sum(np.sqrt(dp * dp + dt * dt)))


def variability_index(x, interval=None, window_s=600.0, peak=None):
    """Path length of ``x`` over that of its moving-average reference.

    ``x`` is a :class:`Profile` or an array sampled every ``interval`` s.
    Normalized by ``peak`` (default: the profile maximum); always >= 1.
    """
    if isinstance(x, Profile):
        interval = x.interval if interval is None else interval
        x = x.samples
    x = np.asarray(x, float)
    if interval is None:
        raise ValueError("interval is required for a bare array")
    if len(x) < 2:
        return 1.0
    if peak is None:
        peak = float(np.max(np.abs(x)))
    if peak == 0:
        return 1.0
    ref = reference_profile(x, interval, window_s)
    return path_length(x, interval, peak) / path_length(ref, interval, peak)


# generation ---------------------------------------------------------------

def clear_sky(t_of_day, sunrise=6 * 3600.0, sunset=18 * 3600.0):
    """Raised-cosine clear-sky multiplier, 1.0 at solar noon, 0 outside daylight."""
    t = np.asarray(t_of_day, float)
    phase = (t - sunrise) / (sunset - sunrise)
    out = 0.5 * (1.0 - np.cos(2.0 * np.pi * phase))
    return np.where((phase >= 0) & (phase <= 1), out, 0.0)


def clear_sky_profile(start=NOON, duration=3600.0, interval=1.0, id="clear-sky"):
    t = start + interval * np.arange(int(round(duration / interval)))
    return Profile(id, "pv", interval, clear_sky(t), start)


def cloud_mask(n, interval, seed, correlation_s=90.0, sharpness=4.0):
    """Seeded cloud-cover signal in [0, 1]: smoothed Gaussian noise through a sigmoid.

    Mostly near 0 (clear) or 1 (shaded) with transitions of a few tens of seconds.
    """
    rng = np.random.default_rng(seed)
    a = math.exp(-interval / correlation_s)
    w = rng.standard_normal(n)
    z = np.empty(n)
    z[0] = w[0]
    scale = math.sqrt(1 - a * a)
    for k in range(1, n):
        z[k] = a * z[k - 1] + scale * w[k]
    z = np.convolve(z, np.ones(5) / 5, mode="same")
    z = (z - z.mean()) / z.std()
    return 0.5 * (1.0 + np.tanh(sharpness * (z - 0.4)))


def cloudy(shape, mask, depth):
    return np.asarray(shape) * (1.0 - depth * mask)


def generate_pv_profile(target_vi, seed=0, base=None, id=None, rtol=0.02, **mask_kw):
    """PV multipliers with variability index within ``rtol`` of ``target_vi``.

    ``base`` is the clear-sky :class:`Profile` (default: one hour from
    noon at 1 s). A seeded cloud mask dims it by a depth found by
    bisection; VI grows monotonically with depth.
    """
    base = clear_sky_profile() if base is None else base
    if target_vi < 1.0:
        raise ValueError("variability index is never below 1")
    mask = cloud_mask(len(base.samples), base.interval, seed, **mask_kw)

    def vi(depth):
        return variability_index(cloudy(base.samples, mask, depth), base.interval)

    lo_vi, hi_vi = vi(0.0), vi(1.0)
    if target_vi > hi_vi * (1 + rtol):
        raise ValueError(f"target VI {target_vi} not attainable: maximum is {hi_vi:.3f} "
                         f"for this base profile and seed")
    if target_vi < lo_vi * (1 - rtol):
        raise ValueError(f"target VI {target_vi} below the clear-sky VI {lo_vi:.3f}")
    lo, hi = 0.0, 1.0
    depth = 0.0
    for _ in range(80):
        depth = 0.5 * (lo + hi)
        got = vi(depth)
        if abs(got - target_vi) <= 1e-4 * target_vi:
            break
        if got < target_vi:
            lo = depth
        else:
            hi = depth
    samples = cloudy(base.samples, mask, depth)
    got = variability_index(samples, base.interval)
    if abs(got - target_vi) > rtol * target_vi:
        raise ValueError(f"could not reach VI {target_vi} (got {got:.3f})")
    return Profile(id or f"pv-vi{target_vi:g}", "pv", base.interval, samples, base.start,
                   {"variability_index": f"{got:.4f}", "seed": seed, "cloud_depth": f"{depth:.6f}"})


def generate_load_profile(seed=0, duration=3600.0, interval=1.0, drift=0.02, noise=0.002,
                          start=NOON, id="load"):
    """Smooth load multiplier around 1.0: a slow drift plus small correlated noise."""
    rng = np.random.default_rng(seed)
    n = int(round(duration / interval))
    t = np.arange(n) * interval
    phase = rng.uniform(0, 2 * np.pi)
    slow = drift * np.sin(2 * np.pi * t / (2 * duration) + phase)
    slow -= slow[0]
    w = rng.standard_normal(n)
    a = math.exp(-interval / 60.0)
    z = np.empty(n)
    z[0] = 0.0
    for k in range(1, n):
        z[k] = a * z[k - 1] + math.sqrt(1 - a * a) * w[k]
    return Profile(id, "load", interval, np.maximum(1.0 + slow + noise * z, 0.0), start)
