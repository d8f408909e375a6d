"""Multi-machine electromechanical dynamics with a constant-power network.

Classical machines (constant EMF behind transient reactance) with a
first-order governor and first-order turbine, integrated by fixed-step
RK4. Bus loads are constant-power injections held between updates; the
network algebra is re-solved at every RK4 stage.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConvergenceError, SimulationAbort
from . import kernel as _kernel
from .powerflow import area_export, build_ybus, solve_with_interchange


@dataclass
class DynamicState:
    """Machine states (system pu) plus the solved bus voltages."""

    t: float
    delta: np.ndarray
    domega: np.ndarray
    pm: np.ndarray
    pv: np.ndarray
    v: np.ndarray
    loads: dict = field(default_factory=dict)
    pagc_mw: np.ndarray | None = None

    def copy(self):
        return replace(
            self, delta=self.delta.copy(), domega=self.domega.copy(),
            pm=self.pm.copy(), pv=self.pv.copy(), v=self.v.copy(),
            loads=dict(self.loads),
            pagc_mw=None if self.pagc_mw is None else self.pagc_mw.copy())

    def as_array(self):
        return np.vstack([self.delta, self.domega, self.pm, self.pv])


class TransmissionModel:
    """Precomputed dynamic model of a :class:`TransmissionSystem`.

    ``pcc_loads`` and other bus loads are given as ``{bus: complex MVA}``;
    AGC setpoints as per-generator MW offsets from the initial dispatch.
    """

    def __init__(self, system, network_tol=1e-12, network_maxit=100,
                 trip_domega=0.05, backend=None):
        self.system = system
        self.network_tol = network_tol
        self.network_maxit = network_maxit
        self.trip_domega = trip_domega
        self.kernel = _kernel if backend is None else _kernel.get_backend(backend)
        base = system.base_mva
        gens = system.generators
        self.gen_ids = [g.id for g in gens]
        self.ng = len(gens)
        idx = system.bus_index()
        self.bus_idx = idx
        self.gen_bus = np.array([idx[g.bus] for g in gens])
        scale = np.array([g.mva / base for g in gens])
        self.inertia = np.array([g.H for g in gens]) * scale
        self.damp = np.array([g.D for g in gens]) * scale
        self.gain = scale / np.array([g.R for g in gens])
        self.tg = np.array([g.Tg for g in gens], dtype=float)
        self.tt = np.array([g.Tt for g in gens], dtype=float)
        self.xd = np.array([g.xd_prime for g in gens]) / scale
        self.y_gen = 1.0 / (1j * self.xd)
        self.ws = 2.0 * np.pi * system.f0_hz

        ybus = build_ybus(system)
        y_aug = ybus.copy()
        for k, b in enumerate(self.gen_bus):
            y_aug[b, b] += self.y_gen[k]
        self.z_aug = np.linalg.inv(y_aug)
        load_buses = set(system.nominal_loads()) | set(system.pcc_buses)
        obs = sorted({int(b) for b in self.gen_bus} | {idx[b] for b in load_buses})
        self.obs = np.array(obs)
        self.obs_pos = {b: k for k, b in enumerate(obs)}
        self.gen_pos = np.array([self.obs_pos[int(b)] for b in self.gen_bus], dtype=np.int_)
        self.zr = np.ascontiguousarray(self.z_aug[np.ix_(self.obs, self.obs)])
        self.emag = None
        self.pref = None
        self.schedule_mw = {a.id: system.area_schedule(a.id) for a in system.areas}

    # ------------------------------------------------------------------
    def _s_obs(self, loads):
        s = np.zeros(len(self.obs), dtype=complex)
        for bus, val in loads.items():
            k = self.bus_idx[bus]
            if k not in self.obs_pos:
                raise KeyError(f"bus {bus} has no load slot in the reduced network")
            s[self.obs_pos[k]] += val / self.system.base_mva
        return s

    def _params(self, pagc_mw):
        pagc = np.zeros(self.ng) if pagc_mw is None else np.asarray(pagc_mw, float) / self.system.base_mva
        return {"emag": self.emag, "pref": self.pref, "pagc": pagc,
                "gain": self.gain, "tg": self.tg, "tt": self.tt,
                "damp": self.damp, "inertia": self.inertia, "ws": self.ws}

    def _merge_loads(self, loads):
        merged = dict(self.system.nominal_loads())
        if loads:
            merged.update(loads)
        return merged

    # ------------------------------------------------------------------
    def init_steady_state(self, pcc_loads=None):
        """Equilibrium with all speed deviations zero.

        Runs the interchange-controlled power flow, back-solves machine
        EMFs and sets mechanical power and governor references to the
        electrical output. The slack area's tie schedule is re-based to its
        solved export so that every tie deviation starts at zero.
        """
        loads = self._merge_loads(pcc_loads)
        pf, _ = solve_with_interchange(self.system, loads)
        base = self.system.base_mva
        v_t = pf.v[self.gen_bus]
        s_gen = np.array([complex(pf.gen_p_mw[g], pf.gen_q_mvar[g]) for g in self.gen_ids]) / base
        i_gen = np.conj(s_gen / v_t)
        e = v_t + 1j * self.xd * i_gen
        self.emag = np.abs(e)
        delta = np.angle(e)
        pe = (e * np.conj(i_gen)).real
        self.pref = pe.copy()
        for a in self.system.areas:
            if a.interchange_generator:
                self.schedule_mw[a.id] = self.system.area_schedule(a.id)
            else:
                self.schedule_mw[a.id] = area_export(self.system, pf.v, a.id)
        state = DynamicState(t=0.0, delta=delta, domega=np.zeros(self.ng),
                             pm=pe.copy(), pv=pe.copy(), v=pf.v.copy(),
                             loads=loads, pagc_mw=np.zeros(self.ng))
        self.network_solve(state)
        return state

    def network_solve(self, state, loads=None):
        """Re-solve the network algebra for ``state`` (in place) at frozen machine states."""
        if loads is not None:
            state.loads = self._merge_loads(loads)
        v_obs = np.ascontiguousarray(state.v[self.obs])
        e_gen = self.emag * np.exp(1j * state.delta)
        s_obs = self._s_obs(state.loads)
        it = self.kernel.solve_network(self.zr, self.gen_pos, self.y_gen, e_gen, s_obs,
                                       v_obs, self.network_tol, self.network_maxit)
        if it < 0:
            raise ConvergenceError("transmission network solve diverged", location=None)
        state.v = self._expand(e_gen, s_obs, v_obs)
        return state

    def _expand(self, e_gen, s_obs, v_obs):
        cur = np.zeros(len(self.obs), dtype=complex)
        cur[self.gen_pos] += e_gen * self.y_gen
        cur -= np.conj(s_obs / v_obs)
        return self.z_aug[:, self.obs] @ cur

    def advance(self, state, dt, n_steps, loads=None, agc_setpoints=None):
        """Integrate ``n_steps`` RK4 steps with loads and setpoints held."""
        out = state.copy()
        if loads is not None:
            out.loads = self._merge_loads(loads)
        if agc_setpoints is not None:
            out.pagc_mw = np.asarray(agc_setpoints, float).copy()
        x = np.ascontiguousarray(out.as_array())
        v_obs = np.ascontiguousarray(out.v[self.obs])
        s_obs = self._s_obs(out.loads)
        status, done = self.kernel.integrate(
            x, self._params(out.pagc_mw), self.zr, self.gen_pos, self.y_gen, s_obs,
            v_obs, float(dt), int(n_steps), self.network_tol, self.network_maxit,
            self.trip_domega)
        out.delta, out.domega, out.pm, out.pv = (x[0].copy(), x[1].copy(), x[2].copy(), x[3].copy())
        out.t = state.t + done * dt
        if status == _kernel.TRIPPED:
            raise SimulationAbort(
                f"speed deviation exceeded {self.trip_domega} pu at t={out.t:.3f} s "
                f"(max |dw| = {np.max(np.abs(out.domega)):.4f})", time=out.t)
        if status == _kernel.NETWORK_DIVERGED:
            raise SimulationAbort(f"network solve diverged at t={out.t:.3f} s", time=out.t)
        out.v = self._expand(self.emag * np.exp(1j * out.delta), s_obs, v_obs)
        return out

    def step_dynamics(self, state, dt, pcc_loads=None, agc_setpoints=None):
        """One RK4 step; returns a new state."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        return self.advance(state, dt, 1, pcc_loads, agc_setpoints)

    # measurements -----------------------------------------------------
    def area_members(self, area_id):
        owner = self.system.area_of_bus()
        return [k for k, g in enumerate(self.system.generators) if owner[g.bus] == area_id]

    def area_frequency(self, state, area_id):
        """Inertia-weighted mean speed deviation of an area's machines, in Hz."""
        members = self.area_members(area_id)
        if not members:
            raise ValueError(f"area {area_id} has no generators")
        h = self.inertia[members]
        return float(np.dot(h, state.domega[members]) / h.sum() * self.system.f0_hz)

    def system_frequency(self, state):
        """Centre-of-inertia frequency deviation of the whole system, in Hz."""
        return float(np.dot(self.inertia, state.domega) / self.inertia.sum() * self.system.f0_hz)

    def tie_line_deviation(self, state, area_id):
        """Actual minus scheduled net export of an area, MW (export-positive)."""
        return area_export(self.system, state.v, area_id) - self.schedule_mw[area_id]

    def pcc_voltage(self, state, bus):
        if bus not in self.system.pcc_buses:
            raise KeyError(f"bus {bus} is not a PCC bus")
        return complex(state.v[self.bus_idx[bus]])

    def electrical_power(self, state):
        e = self.emag * np.exp(1j * state.delta)
        i_gen = (e - state.v[self.gen_bus]) * self.y_gen
        return (e * np.conj(i_gen)).real

    def composite_droop_response(self):
        """Quasi-steady frequency sensitivity, Hz per MW of load increase."""
        beta_pu = self.gain.sum() + self.damp.sum()
        return -self.system.f0_hz / (beta_pu * self.system.base_mva)

    def area_frequency_response(self, area_id):
        """Natural frequency response of an area (sum of 1/R + D), MW/Hz."""
        m = self.area_members(area_id)
        return float((self.gain[m].sum() + self.damp[m].sum()) * self.system.base_mva / self.system.f0_hz)

    def headroom(self):
        gens = self.system.generators
        return (np.array([g.reserve_up_mw for g in gens]),
                np.array([g.reserve_down_mw for g in gens]))
