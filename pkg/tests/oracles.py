"""Independent reference solvers used only by the test suite."""
import numpy as np

from hybridtd.distribution.feeder import PHASES
from hybridtd.distribution.sweep import balanced_head


def feeder_newton(feeder, head_voltage, demand_kva, tol=1e-13, max_iter=50):
    """Full Newton-Raphson on nodal equations ``V * conj(Y V) = -S``.

    ``demand_kva`` maps (node, phase) to complex kVA drawn. Works directly
    from segment impedances, without the sweep's incidence operators.
    Returns ``{(node, phase): complex voltage}``.
    """
    nodes = feeder.node_map()
    keys = [(feeder.head, p) for p in PHASES]
    keys += [(n.id, p) for n in feeder.nodes if n.id != feeder.head for p in n.phases]
    idx = {k: i for i, k in enumerate(keys)}
    n = len(keys)
    y = np.zeros((n, n), dtype=complex)
    for seg in feeder.segments:
        ph = nodes[seg.to_node].phases
        kv = nodes[seg.to_node].base_kv
        ys = np.linalg.inv(seg.z_ohm() / (kv * kv / (feeder.s_base_kva / 1000.0)))
        p_idx = [idx[(seg.from_node, p)] for p in ph]
        c_idx = [idx[(seg.to_node, p)] for p in ph]
        t = seg.tap
        for a in range(len(ph)):
            for b in range(len(ph)):
                y[p_idx[a], p_idx[b]] += ys[a, b] / (t * t)
                y[p_idx[a], c_idx[b]] -= ys[a, b] / t
                y[c_idx[a], p_idx[b]] -= ys[a, b] / t
                y[c_idx[a], c_idx[b]] += ys[a, b]
    s_phase = feeder.s_base_kva / 3.0
    s_spec = np.zeros(n, dtype=complex)
    for k, val in demand_kva.items():
        s_spec[idx[k]] -= val / s_phase
    v = np.ones(n, dtype=complex)
    v[:3] = balanced_head(head_voltage)
    for k in range(3, n):
        v[k] = v[PHASES.index(keys[k][1])]
    unk = np.arange(3, n)
    m = len(unk)
    for _ in range(max_iter):
        i_net = y @ v
        s = v * np.conj(i_net)
        f = (s - s_spec)[unk]
        ds_de = np.diag(np.conj(i_net)) + np.diag(v) @ np.conj(y)
        ds_df = 1j * np.diag(np.conj(i_net)) - 1j * np.diag(v) @ np.conj(y)
        jac = np.block([
            [ds_de.real[np.ix_(unk, unk)], ds_df.real[np.ix_(unk, unk)]],
            [ds_de.imag[np.ix_(unk, unk)], ds_df.imag[np.ix_(unk, unk)]],
        ])
        dx = np.linalg.solve(jac, -np.concatenate([f.real, f.imag]))
        v[unk] += dx[:m] + 1j * dx[m:]
        if np.max(np.abs(dx)) < tol:
            break
    else:
        raise RuntimeError("oracle Newton did not converge")
    return {k: v[i] for k, i in idx.items()}


def demand_map(feeder, injections=None, load_scale=1.0):
    """Net (node, phase) demand in kVA for the oracle, mirroring device semantics."""
    out = {}
    for ld in feeder.loads:
        key = (ld.node, ld.phase)
        out[key] = out.get(key, 0j) + complex(ld.kw, ld.kvar) * load_scale
    devices = {p.id: (p.node, p.phases) for p in feeder.pv}
    devices.update({b.unit: (b.node, b.phases) for b in feeder.bess})
    for dev, kw in (injections or {}).items():
        node, phases = devices[dev]
        for p in phases:
            out[(node, p)] = out.get((node, p), 0j) - complex(kw) / len(phases)
    return out


def two_bus_newton(z, s_load, v_src=1.0 + 0j, tol=1e-14):
    """Brute-force Newton on the real 2-bus equation ``V = Vs - z conj(S/V)``.

    Finite-difference Jacobian in rectangular coordinates.
    """
    def resid(x):
        v = x[0] + 1j * x[1]
        r = v - v_src + z * np.conj(s_load / v)
        return np.array([r.real, r.imag])

    x = np.array([v_src.real, v_src.imag])
    for _ in range(100):
        r = resid(x)
        if np.max(np.abs(r)) < tol:
            break
        jac = np.empty((2, 2))
        for k in range(2):
            dx = np.zeros(2)
            dx[k] = 1e-7
            jac[:, k] = (resid(x + dx) - resid(x - dx)) / 2e-7
        x = x - np.linalg.solve(jac, r)
    return x[0] + 1j * x[1]
