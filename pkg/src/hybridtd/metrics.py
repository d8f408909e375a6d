"""Run results on the distribution time base, their summaries, paired
comparisons and file output.

Output directory layout (all CSVs have a header row; floats are written
with full round-trip precision):

``frequency.csv``
    ``t``, ``df_system_hz``, ``df_area<a>_hz`` -- centre-of-inertia
    frequency deviations.
``ace.csv``
    ``t``, per area ``ace_area<a>``, ``ace_b_area<a>``, ``ace_g_area<a>``,
    ``cmd_b_area<a>``, ``cmd_g_area<a>`` (MW), then ``ace_system`` =
    sum over areas of ``|ACE|``. Split channels and commands are from the
    latest AGC interval.
``pcc.csv``
    ``t``, per PCC bus ``p_bus<b>_mw``, ``q_bus<b>_mvar``: total PCC load
    (background plus feeder head power).
``bess.csv``
    ``t``, per unit ``<id>_kw`` (delivered, discharge-positive) and
    ``<id>_soc`` at the end of the step.
``voltage.csv``
    ``t``, per feeder ``vmin_<feeder>``, ``vmax_<feeder>`` (pu).
``coupling.csv``
    ``t``, ``iterations``, ``mismatch_pu`` (final), ``converged``.
``violations.csv``
    ``time``, ``feeder``, ``node``, ``phase``, ``v_pu``; one row per
    node-phase outside limits per step.
``events.json``, ``summary.txt`` (``key = value``), ``plots/*.csv`` and
``manifest.json`` (file, bytes, sha256).
"""
from dataclasses import dataclass, field
import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def ace_std(series):
    """Population standard deviation of an ACE series, MW."""
    x = np.asarray(series, float)
    if x.size == 0:
        raise ValueError("ACE series is empty")
    return float(np.std(x))


def system_ace(per_area):
    """Sum over areas of ``|ACE|`` at each step."""
    return np.sum(np.abs(np.vstack(list(per_area))), axis=0) if per_area else np.zeros(0)


@dataclass
class MetricsBundle:
    name: str
    dt: float
    t: np.ndarray
    areas: list
    pcc_buses: list
    units: list
    feeders: list
    df_system: np.ndarray
    df_area: dict
    ace: dict
    ace_b: dict
    ace_g: dict
    cmd_b: dict
    cmd_g: dict
    pcc_p: dict
    pcc_q: dict
    bess_kw: dict
    bess_soc: dict
    v_min: dict
    v_max: dict
    tc_iterations: np.ndarray
    tc_mismatch: np.ndarray
    tc_converged: np.ndarray
    violations: list = field(default_factory=list)
    hidden_violations: list = field(default_factory=list)
    events: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def allocate(cls, name, n, dt, areas, pcc_buses, units, feeders):
        z = lambda: np.zeros(n)
        per = lambda keys: {k: z() for k in keys}
        return cls(name, dt, np.arange(n) * dt, list(areas), list(pcc_buses), list(units),
                   list(feeders), z(), per(areas), per(areas), per(areas), per(areas),
                   per(areas), per(areas), per(pcc_buses), per(pcc_buses), per(units), per(units),
                   per(feeders), per(feeders), np.zeros(n, dtype=int), z(), np.zeros(n, dtype=bool))

    def record(self, n, sim, meas, last, solutions):
        self.df_system[n] = sim.model.system_frequency(sim.state)
        for a in self.areas:
            df, _, ace = meas[a]
            self.df_area[a][n] = df
            self.ace[a][n] = ace
            rec = last.get(a)
            if rec is not None:
                self.ace_b[a][n] = rec.ace_b
                self.ace_g[a][n] = rec.ace_g
                self.cmd_b[a][n] = rec.cmd_b_mw
                self.cmd_g[a][n] = rec.cmd_g_mw
        for ex in sim.exchanges:
            s = sim.state.loads[ex.pcc_bus]
            self.pcc_p[ex.pcc_bus][n] = s.real
            self.pcc_q[ex.pcc_bus][n] = s.imag
        for uid in self.units:
            self.bess_kw[uid][n] = sim.bess_actual[uid]
            self.bess_soc[uid][n] = sim.units[uid].soc
        for name, sol in zip(self.feeders, solutions):
            mags = np.abs(np.concatenate([sol.v_head, sol.v]))
            self.v_min[name][n] = mags.min()
            self.v_max[name][n] = mags.max()
        traces = [ex.trace for ex in sim.exchanges if ex.trace]
        self.tc_iterations[n] = max((len(tr) for tr in traces), default=1)
        self.tc_mismatch[n] = max((tr[-1] for tr in traces), default=0.0)
        self.tc_converged[n] = all(ex.converged for ex in sim.exchanges)

    def truncate(self, n):
        """Keep the first ``n`` steps (after an abort)."""
        def cut(x):
            return x[:n]
        self.t = cut(self.t)
        self.df_system = cut(self.df_system)
        for d in (self.df_area, self.ace, self.ace_b, self.ace_g, self.cmd_b, self.cmd_g,
                  self.pcc_p, self.pcc_q, self.bess_kw, self.bess_soc, self.v_min, self.v_max):
            for k in d:
                d[k] = cut(d[k])
        self.tc_iterations = cut(self.tc_iterations)
        self.tc_mismatch = cut(self.tc_mismatch)
        self.tc_converged = cut(self.tc_converged)

    @property
    def ace_system(self):
        if not len(self.t):
            return np.zeros(0)
        return system_ace(self.ace[a] for a in self.areas)

    def summary(self):
        out = {"name": self.name, "status": self.status, "steps": len(self.t)}
        out.update({k: v for k, v in self.meta.items()})
        if len(self.t):
            for a in self.areas:
                out[f"ace_std_area{a}"] = ace_std(self.ace[a])
            out["ace_std_system"] = ace_std(self.ace_system)
            out["max_abs_df_hz"] = float(np.max(np.abs(self.df_system)))
            for a in self.areas:
                out[f"max_abs_df_area{a}_hz"] = float(np.max(np.abs(self.df_area[a])))
            out["tc_mean_iterations"] = float(np.mean(self.tc_iterations))
            out["tc_max_iterations"] = int(np.max(self.tc_iterations))
            out["tc_max_final_mismatch_pu"] = float(np.max(self.tc_mismatch))
            out["tc_nonconverged_steps"] = int(np.sum(~self.tc_converged))
        out["violation_count"] = len(self.violations)
        out["hidden_violation_count"] = len(self.hidden_violations)
        return out

    # column views ------------------------------------------------------------
    def tables(self):
        """``{file name: (header, columns)}`` for every series family."""
        a = self.areas
        freq = (["t", "df_system_hz"] + [f"df_area{k}_hz" for k in a],
                [self.t, self.df_system] + [self.df_area[k] for k in a])
        h, c = ["t"], [self.t]
        for k in a:
            h += [f"ace_area{k}", f"ace_b_area{k}", f"ace_g_area{k}", f"cmd_b_area{k}", f"cmd_g_area{k}"]
            c += [self.ace[k], self.ace_b[k], self.ace_g[k], self.cmd_b[k], self.cmd_g[k]]
        ace = (h + ["ace_system"], c + [self.ace_system])
        h, c = ["t"], [self.t]
        for b in self.pcc_buses:
            h += [f"p_bus{b}_mw", f"q_bus{b}_mvar"]
            c += [self.pcc_p[b], self.pcc_q[b]]
        pcc = (h, c)
        h, c = ["t"], [self.t]
        for u in self.units:
            h += [f"{u}_kw", f"{u}_soc"]
            c += [self.bess_kw[u], self.bess_soc[u]]
        bess = (h, c)
        h, c = ["t"], [self.t]
        for f in self.feeders:
            h += [f"vmin_{f}", f"vmax_{f}"]
            c += [self.v_min[f], self.v_max[f]]
        volt = (h, c)
        coup = (["t", "iterations", "mismatch_pu", "converged"],
                [self.t, self.tc_iterations, self.tc_mismatch, self.tc_converged.astype(int)])
        return {"frequency.csv": freq, "ace.csv": ace, "pcc.csv": pcc, "bess.csv": bess,
                "voltage.csv": volt, "coupling.csv": coup}

    def plot_tables(self):
        """Plot-ready column sets, one per comparison figure."""
        t = self.t
        counts = np.zeros(len(t), dtype=int)
        for v in self.violations:
            k = int(round(v["time"] / self.dt))
            if 0 <= k < len(t):
                counts[k] += 1
        f = self.feeders
        a = self.areas
        return {
            "frequency_bess.csv": (["t", "df_system_hz"], [t, self.df_system]),
            "system_ace_bess.csv": (["t", "ace_system"], [t, self.ace_system]),
            "feeder_min_voltage.csv": (["t"] + [f"vmin_{x}" for x in f], [t] + [self.v_min[x] for x in f]),
            "violation_counts.csv": (["t", "violations"], [t, counts]),
            "system_ace_variability.csv": (["t", "ace_system"], [t, self.ace_system]),
            "area_ace_model.csv": (["t"] + [f"ace_area{k}" for k in a], [t] + [self.ace[k] for k in a]),
            "area_frequency_model.csv": (["t"] + [f"df_area{k}_hz" for k in a],
                                         [t] + [self.df_area[k] for k in a]),
            "system_ace_coupling.csv": (["t", "ace_system", "iterations"],
                                        [t, self.ace_system, self.tc_iterations]),
        }


# files -----------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])


def read_table(path):
    """``{column: np.ndarray}`` from a CSV written by :func:`write_table`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in r] for r in reader]
    data = np.array(rows).reshape(-1, len(header))
    return {h: data[:, k] for k, h in enumerate(header)}


def write_summary(path, summary):
    with open(path, "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k} = {_fmt(v)}\n")


def read_summary(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" not in line:
                continue
            k, _, v = line.partition("=")
            v = v.strip()
            try:
                out[k.strip()] = int(v)
            except ValueError:
                try:
                    out[k.strip()] = float(v)
                except ValueError:
                    out[k.strip()] = v
    return out


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def emit_outputs(bundle, out_dir):
    """Write every series family, violations, events, summary, plot data and
    a checksummed manifest; returns the manifest entries."""
    out = Path(out_dir)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    written = []
    for name, (h, c) in bundle.tables().items():
        write_table(out / name, h, c)
        written.append(name)
    rows = bundle.violations
    write_table(out / "violations.csv", ["time", "feeder", "node", "phase", "v_pu"],
                [[r[k] for r in rows] for k in ("time", "feeder", "node", "phase", "v_pu")])
    written.append("violations.csv")
    if bundle.hidden_violations:
        rows = bundle.hidden_violations
        write_table(out / "realized_violations.csv", ["time", "feeder", "node", "phase", "v_pu"],
                    [[r[k] for r in rows] for k in ("time", "feeder", "node", "phase", "v_pu")])
        written.append("realized_violations.csv")
    (out / "events.json").write_text(json.dumps(bundle.events, indent=1, default=_fmt))
    written.append("events.json")
    write_summary(out / "summary.txt", bundle.summary())
    written.append("summary.txt")
    for name, (h, c) in bundle.plot_tables().items():
        write_table(out / "plots" / name, h, c)
        written.append(f"plots/{name}")
    manifest = [{"file": f, "bytes": (out / f).stat().st_size, "sha256": _sha256(out / f)}
                for f in written]
    (out / "manifest.json").write_text(json.dumps(
        {"name": bundle.name, "status": bundle.status, "error": bundle.error, "files": manifest},
        indent=1))
    return manifest


# comparisons -------------------------------------------------------------------

# (better, worse) pairs on a metadata key: the first run is expected to
# have the lower system ACE standard deviation.
EXPECTATIONS = {
    "bess_scheme": [("equal", "none"), ("heterogeneous", "none")],
    "coupling": [("tc", "lc")],
    "model": [("cosim", "aggregated")],
    "vi": [("low", "med"), ("med", "high"), ("low", "high")],
}


def infer_expectations(meta_a, meta_b):
    """Directional checks implied by how two runs differ."""
    diff = [k for k in EXPECTATIONS if meta_a.get(k) != meta_b.get(k)]
    if len(diff) != 1:
        return []
    key = diff[0]
    pair = (meta_a.get(key), meta_b.get(key))
    for better, worse in EXPECTATIONS[key]:
        if pair == (better, worse):
            return [("ace_std_system", "a<=b" if key == "coupling" else "a<b")]
        if pair == (worse, better):
            return [("ace_std_system", "b<=a" if key == "coupling" else "b<a")]
    return []


_OPS = {"a<b": lambda a, b: a < b, "a<=b": lambda a, b: a <= b,
        "b<a": lambda a, b: b < a, "b<=a": lambda a, b: b <= a}


@dataclass
class Comparison:
    rows: list
    checks: list

    @property
    def passed(self):
        return all(ok for *_, ok in self.checks)

    def format(self):
        lines = [f"{'metric':32s} {'A':>14s} {'B':>14s} {'B-A':>14s}"]
        for key, a, b, d in self.rows:
            lines.append(f"{key:32s} {a:14.6g} {b:14.6g} {d:14.6g}")
        for key, op, a, b, ok in self.checks:
            lines.append(f"expect {key} {op}: {'PASS' if ok else 'FAIL'} ({a:.6g} vs {b:.6g})")
        return "\n".join(lines)


def compare_runs(a, b, expectations=None):
    """Side-by-side numeric summaries with deltas and directional checks.

    ``a`` and ``b`` are bundles or summary dicts; ``expectations`` is a
    list of ``(key, op)`` with ``op`` in ``a<b``, ``a<=b``, ``b<a``,
    ``b<=a``; by default they are inferred from the run metadata.
    """
    sa = a.summary() if isinstance(a, MetricsBundle) else dict(a)
    sb = b.summary() if isinstance(b, MetricsBundle) else dict(b)
    if sa.get("steps") != sb.get("steps"):
        raise ValueError(f"runs cover different horizons ({sa.get('steps')} vs {sb.get('steps')} steps)")
    numeric = [k for k in sa if k in sb and isinstance(sa[k], (int, float))
               and not isinstance(sa[k], bool) and isinstance(sb[k], (int, float)) and k != "seed"]
    rows = [(k, float(sa[k]), float(sb[k]), float(sb[k]) - float(sa[k])) for k in numeric]
    if expectations is None:
        expectations = infer_expectations(sa, sb)
    checks = []
    for key, op in expectations:
        va, vb = float(sa[key]), float(sb[key])
        checks.append((key, op, va, vb, bool(_OPS[op](va, vb))))
    return Comparison(rows, checks)
