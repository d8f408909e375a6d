"""Steady-state network model: admittance matrix and Newton-Raphson power flow."""
from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError


def build_ybus(system):
    """Bus admittance matrix (pu) ordered as ``system.buses``."""
    idx = system.bus_index()
    n = len(system.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in system.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b
        y[i, i] += ys + ysh
        y[j, j] += ys + ysh
        y[i, j] -= ys
        y[j, i] -= ys
    return y


def branch_flows(system, v, branch):
    """Complex power (pu) leaving each end of ``branch`` into the series element."""
    idx = system.bus_index()
    vi, vj = v[idx[branch.from_bus]], v[idx[branch.to_bus]]
    ys = 1.0 / complex(branch.r, branch.x)
    ysh = 0.5j * branch.b
    s_from = vi * np.conj((vi - vj) * ys + vi * ysh)
    s_to = vj * np.conj((vj - vi) * ys + vj * ysh)
    return s_from, s_to


def area_export(system, v, area_id):
    """Actual net active-power export of an area in MW (export-positive)."""
    owner = system.area_of_bus()
    total = 0.0
    for br in system.branches:
        a_from, a_to = owner[br.from_bus], owner[br.to_bus]
        if a_from == a_to:
            continue
        s_from, s_to = branch_flows(system, v, br)
        if a_from == area_id:
            total += s_from.real
        elif a_to == area_id:
            total += s_to.real
    return total * system.base_mva


@dataclass
class PowerFlowResult:
    v: np.ndarray
    gen_p_mw: dict
    gen_q_mvar: dict
    iterations: int
    mismatch: float


def _bus_loads(system, loads):
    idx = system.bus_index()
    s = np.zeros(len(system.buses), dtype=complex)
    for bus, val in loads.items():
        s[idx[bus]] += val / system.base_mva
    return s


def solve_power_flow(system, loads=None, gen_p_mw=None, tol=1e-12, max_iter=30):
    """Newton-Raphson power flow in polar coordinates.

    ``loads`` maps bus id to complex MVA (defaults to the case loads);
    ``gen_p_mw`` overrides scheduled generator outputs. Reactive limits are
    not enforced.
    """
    if loads is None:
        loads = system.nominal_loads()
    gen_p = {g.id: g.p_mw for g in system.generators}
    if gen_p_mw:
        gen_p.update(gen_p_mw)
    idx = system.bus_index()
    n = len(system.buses)
    ybus = build_ybus(system)
    s_load = _bus_loads(system, loads)
    p_gen = np.zeros(n)
    for g in system.generators:
        p_gen[idx[g.bus]] += gen_p[g.id] / system.base_mva
    gen_buses = {g.bus for g in system.generators}

    vm = np.ones(n)
    va = np.zeros(n)
    for b in system.buses:
        if b.type == "slack" or (b.id in gen_buses and b.type == "pv"):
            vm[idx[b.id]] = b.v_set
    slack = idx[system.slack_bus]
    pv = [idx[b.id] for b in system.buses if b.type == "pv" and b.id in gen_buses]
    pq = [i for i in range(n) if i != slack and i not in pv]
    ang = [i for i in range(n) if i != slack]
    p_spec = p_gen - s_load.real
    q_spec = -s_load.imag

    def mismatch(vm, va):
        v = vm * np.exp(1j * va)
        s = v * np.conj(ybus @ v)
        return v, s, np.concatenate([p_spec[ang] - s.real[ang], q_spec[pq] - s.imag[pq]])

    v, s, f = mismatch(vm, va)
    for it in range(max_iter + 1):
        err = np.max(np.abs(f)) if f.size else 0.0
        if err < tol:
            break
        if it == max_iter:
            worst = int(np.argmax(np.abs(f)))
            bus_pos = (ang + pq)[worst]
            raise ConvergenceError(
                f"power flow did not converge after {max_iter} iterations; "
                f"worst mismatch {err:.3e} pu at bus {system.buses[bus_pos].id}",
                location=system.buses[bus_pos].id, mismatch=err)
        i_bus = ybus @ v
        diag_v = np.diag(v)
        diag_i = np.diag(i_bus)
        diag_vn = np.diag(v / vm)
        ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
        ds_dvm = diag_v @ np.conj(ybus @ diag_vn) + np.conj(diag_i) @ diag_vn
        jac = np.block([
            [ds_dva.real[np.ix_(ang, ang)], ds_dvm.real[np.ix_(ang, pq)]],
            [ds_dva.imag[np.ix_(pq, ang)], ds_dvm.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(jac, f)
        va[ang] += dx[:len(ang)]
        vm[pq] += dx[len(ang):]
        v, s, f = mismatch(vm, va)

    # slack supplies the residual; reactive output split by machine rating
    s_gen = s + s_load
    out_p, out_q = {}, {}
    for bus in gen_buses:
        units = [g for g in system.generators if g.bus == bus]
        total_mva = sum(g.mva for g in units)
        k = idx[bus]
        for g in units:
            share = g.mva / total_mva
            out_p[g.id] = (s_gen[k].real * share if k == slack else gen_p[g.id] / system.base_mva) * system.base_mva
            out_q[g.id] = s_gen[k].imag * share * system.base_mva
    return PowerFlowResult(v=v, gen_p_mw=out_p, gen_q_mvar=out_q,
                           iterations=it, mismatch=float(err))


def solve_with_interchange(system, loads=None, tol=1e-9, max_iter=20):
    """Power flow that also meets each area's scheduled export.

    Areas naming an ``interchange_generator`` have that unit's output
    adjusted (Newton with a finite-difference Jacobian) until the actual
    export matches the tie-line schedule within ``tol`` MW.
    """
    ctrl = [(a.id, a.interchange_generator) for a in system.areas if a.interchange_generator]
    gen_p = {g.id: g.p_mw for g in system.generators}
    if not ctrl:
        return solve_power_flow(system, loads, gen_p), gen_p
    target = np.array([system.area_schedule(a) for a, _ in ctrl])

    def residual(p):
        gen_p.update({g: p[k] for k, (_, g) in enumerate(ctrl)})
        res = solve_power_flow(system, loads, gen_p)
        return np.array([area_export(system, res.v, a) for a, _ in ctrl]) - target, res

    p = np.array([gen_p[g] for _, g in ctrl])
    for it in range(max_iter):
        r, res = residual(p)
        if np.max(np.abs(r)) < tol:
            return res, dict(gen_p)
        jac = np.empty((len(ctrl), len(ctrl)))
        for k in range(len(ctrl)):
            dp = p.copy()
            dp[k] += 1e-3
            jac[:, k] = (residual(dp)[0] - r) / 1e-3
        p = p - np.linalg.solve(jac, r)
    raise ConvergenceError("area interchange control did not converge",
                           location=ctrl[int(np.argmax(np.abs(r)))][0], mismatch=float(np.max(np.abs(r))))
