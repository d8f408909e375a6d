"""Multi-rate coordinator: transmission dynamics inside distribution steps
inside AGC intervals, with tight or loose PCC coupling.

Each distribution step at time ``t``:

1. setpoints dispatched at the previous step take effect; storage runs
   them for the coming step and PV/load profiles are sampled at ``t``;
2. PCC exchange: feeders are solved at the transmission PCC voltages and
   their head powers become PCC loads (once for LC, iterated for TC);
3. measurements are recorded and, on AGC boundaries, the controllers run;
4. the transmission dynamics advance over the step with the PCC loads
   held.
"""
from dataclasses import dataclass, field, replace
import logging

import numpy as np

from .agc import AreaControl, FilterPi, compute_ace
from .bess import apply_setpoint, refresh_daa
from .distribution.aggregate import equivalent_bess
from .distribution.sweep import FeederNetwork, check_voltage_limits
from .errors import ConvergenceError, SimulationAbort
from .metrics import MetricsBundle
from .transmission.dynamics import TransmissionModel

log = logging.getLogger(__name__)


@dataclass
class PccExchange:
    pcc_bus: int
    feeder: str
    voltage: complex = 1.0 + 0j
    head_kva: complex = 0j
    trace: list = field(default_factory=list)
    converged: bool = True


class CoSimulation:
    """One run of an :class:`~hybridtd.scenario.experiments.Experiment`."""

    def __init__(self, experiment, backend=None):
        self.exp = experiment
        self.schedule = experiment.schedule
        self.system = experiment.system
        self.model = TransmissionModel(self.system, backend=backend)
        self.base = self.system.base_mva
        self.networks = [FeederNetwork(b.feeder) for b in experiment.feeders]
        self.units = {u.id: replace(u) for u in experiment.units}
        owner = self.system.area_of_bus()
        self.area_ids = [a.id for a in self.system.areas]
        self.area_units = {a: [] for a in self.area_ids}
        self.feeder_units = []
        for b in experiment.feeders:
            ids = [att.unit for att in b.feeder.bess]
            self.feeder_units.append(ids)
            self.area_units[owner[b.pcc_bus]].extend(ids)
        n = self.schedule.n_steps
        dt = self.schedule.dt_distribution
        self.pv_series = []
        self.load_scale = []
        for b in experiment.feeders:
            self.pv_series.append({p.id: p.kw_rated * experiment.profile_for(b, p.profile).resample(dt, n * dt)
                                   for p in b.feeder.pv})
            if b.load_profile is None:
                self.load_scale.append(np.ones(n))
            else:
                self.load_scale.append(experiment.profiles[b.load_profile].resample(dt, n * dt))
        self.exchanges = [PccExchange(b.pcc_bus, b.feeder.name) for b in experiment.feeders]
        self.events = []
        self._build_controllers()
        self.aggregate = None
        if self.schedule.model == "aggregated":
            self.aggregate = {a: equivalent_bess([self.units[u] for u in self.area_units[a]],
                                                 f"area{a}.agg")
                              for a in self.area_ids}

    # setup --------------------------------------------------------------
    def _build_controllers(self):
        cfg = self.exp.controller
        self.controllers = {}
        self.agc_gens = {}
        for a in self.area_ids:
            gens = [g for g in self.system.area_generators(a) if g.agc]
            self.agc_gens[a] = gens
            beta = cfg.beta.get(a) or self.model.area_frequency_response(a)
            pf = cfg.participation.get(a)
            if pf is None:
                total = sum(g.reserve_up_mw for g in gens)
                pf = {g.id: (g.reserve_up_mw / total if total > 0 else 1.0 / len(gens))
                      for g in gens}
            c, s = cfg.conventional, cfg.storage
            self.controllers[a] = AreaControl(a, beta, FilterPi(c.tau, c.kp, c.ki),
                                              FilterPi(s.tau, s.kp, s.ki), pf, cfg.interval)

    def _injections(self, k, n):
        inj = {pid: complex(series[n]) for pid, series in self.pv_series[k].items()}
        for uid in self.feeder_units[k]:
            inj[uid] = complex(self.bess_actual[uid])
        return inj

    def _solve_feeders(self, n, voltages):
        out = []
        for k, net in enumerate(self.networks):
            try:
                out.append(net.solve(voltages[k], self._injections(k, n), self.load_scale[k][n]))
            except (ConvergenceError, ValueError) as exc:
                raise SimulationAbort(f"feeder {net.feeder.name}: {exc}", time=n * self.schedule.dt_distribution) from exc
        return out

    def _pcc_loads(self, heads_kva, t):
        loads = {}
        for ex, bulk, s in zip(self.exchanges, self.bulk, heads_kva):
            loads[ex.pcc_bus] = bulk + s / 1000.0
        for d in self.exp.scenario.disturbances:
            if t >= d.time - 1e-9:
                loads[d.pcc] = loads.get(d.pcc, self.system.nominal_loads().get(d.pcc, 0j)) + d.dp_mw
        return loads

    def initialize(self):
        """Steady state in which every PCC carries exactly its nominal case load."""
        self.bess_actual = {uid: 0.0 for uid in self.units}
        self.gen_setpoints = np.zeros(self.model.ng)
        nominal = self.system.nominal_loads()
        state = self.model.init_steady_state()
        volts = [self.model.pcc_voltage(state, ex.pcc_bus) for ex in self.exchanges]
        self.bulk = [nominal.get(ex.pcc_bus, 0j) for ex in self.exchanges]
        for k, (ex, sol) in enumerate(zip(self.exchanges, self._solve_feeders(0, volts))):
            ex.head_kva = sol.head_power
            ex.voltage = volts[k]
            self.bulk[k] -= ex.head_kva / 1000.0
        self.state = state
        self.pending = None
        return state

    # one distribution step -----------------------------------------------
    def _exchange(self, n, max_iter):
        """Fixed-point PCC exchange; one pass when ``max_iter == 1``."""
        t = n * self.schedule.dt_distribution
        tol = self.schedule.tc_tolerance
        alpha = self.schedule.damping
        held = [ex.head_kva for ex in self.exchanges]
        traces = [[] for _ in self.exchanges]
        converged = False
        sols, volts, worst = [], [], 0.0
        for _ in range(max_iter):
            volts = [self.model.pcc_voltage(self.state, ex.pcc_bus) for ex in self.exchanges]
            sols = self._solve_feeders(n, volts)
            new = [h + alpha * (s.head_power - h) for h, s in zip(held, sols)]
            diffs = [abs(a - b) / 1000.0 / self.base for a, b in zip(new, held)]
            for tr, d in zip(traces, diffs):
                tr.append(d)
            held = new
            try:
                self.model.network_solve(self.state, self._pcc_loads(held, t))
            except ConvergenceError as exc:
                raise SimulationAbort(f"transmission network: {exc}", time=t) from exc
            worst = max(diffs, default=0.0)
            if worst < tol:
                converged = True
                break
        for ex, h, tr, v in zip(self.exchanges, held, traces, volts):
            ex.head_kva = h
            ex.voltage = v
            ex.trace = tr
            ex.converged = converged
        if not converged and max_iter > 1:
            msg = f"PCC exchange not converged at t={t:.3f} s (mismatch {worst:.3e} pu)"
            self.events.append({"kind": "tc_not_converged", "t": t, "mismatch": worst})
            log.warning(msg)
            if self.schedule.abort_on_nonconvergence:
                raise SimulationAbort(msg, time=t)
        return sols

    def run_distribution_step_tc(self, n):
        return self._exchange(n, self.schedule.tc_max_iterations)

    def run_distribution_step_lc(self, n):
        return self._exchange(n, 1)

    def _measure(self):
        out = {}
        for a in self.area_ids:
            df = self.model.area_frequency(self.state, a)
            dp = self.model.tie_line_deviation(self.state, a)
            out[a] = (df, dp, compute_ace(self.controllers[a].beta, df, dp))
        return out

    def run_agc_interval(self, t, meas=None):
        """Run every area controller; setpoints take effect at the next step."""
        meas = meas or self._measure()
        records = {}
        for a in self.area_ids:
            units = [refresh_daa(self.units[u]) for u in self.area_units[a]]
            agg = refresh_daa(self.aggregate[a]) if self.aggregate and self.aggregate[a] else None
            df, dp, _ = meas[a]
            rec = self.controllers[a].step(t, df, dp, self.agc_gens[a], units,
                                           aggregate=agg if self.aggregate else None)
            for ev in rec.events:
                self.events.append(dict(ev, t=t, area=a))
            records[a] = rec
        return records

    def _apply_dispatch(self, records):
        for rec in records.values():
            for gid, mw in rec.gen_setpoints.items():
                self.gen_setpoints[self.model.gen_ids.index(gid)] = mw
            for uid, kw in rec.bess_setpoints.items():
                self.units[uid].setpoint_kw = kw

    def _run_storage(self, dt):
        for uid, unit in self.units.items():
            p, self.units[uid] = apply_setpoint(unit, unit.setpoint_kw, dt)
            self.bess_actual[uid] = p
        if self.aggregate:
            for a, agg in self.aggregate.items():
                if agg is not None:
                    cmd = sum(self.units[u].setpoint_kw for u in self.area_units[a])
                    _, self.aggregate[a] = apply_setpoint(agg, cmd, dt)

    # main loop -------------------------------------------------------------
    def run(self):
        sched = self.schedule
        n_steps = sched.n_steps
        dt = sched.dt_distribution
        bundle = MetricsBundle.allocate(self.exp.name, n_steps, dt, self.area_ids,
                                        [ex.pcc_bus for ex in self.exchanges],
                                        list(self.units), [net.feeder.name for net in self.networks])
        bundle.meta.update({"coupling": sched.coupling, "model": sched.model,
                            "seed": self.exp.scenario.seed,
                            "bess_scheme": self.exp.scenario.bess_scheme,
                            "vi": self.exp.scenario.variability or "none"})
        self.initialize()
        max_iter = 1 if sched.coupling == "lc" else sched.tc_max_iterations
        visible = self.aggregate is None
        last = {a: None for a in self.area_ids}
        try:
            for n in range(n_steps):
                t = n * dt
                if self.pending is not None:
                    self._apply_dispatch(self.pending)
                    self.pending = None
                self._run_storage(dt)
                sols = self._exchange(n, max_iter)
                meas = self._measure()
                if self.exp.controller.enabled and n % sched.agc_every == 0:
                    recs = self.run_agc_interval(t, meas)
                    self.pending = recs
                    last.update(recs)
                viol = []
                for net, sol in zip(self.networks, sols):
                    for v in check_voltage_limits(sol, time=t):
                        viol.append({"time": t, "feeder": net.feeder.name, "node": v.node,
                                     "phase": v.phase, "v_pu": v.v_pu})
                (bundle.violations if visible else bundle.hidden_violations).extend(viol)
                bundle.record(n, self, meas, last, sols)
                self.state = self.model.advance(self.state, sched.dt_transmission, sched.substeps,
                                                agc_setpoints=self.gen_setpoints)
        except SimulationAbort as exc:
            bundle.truncate(n)
            bundle.status = "aborted"
            bundle.error = str(exc)
            self.events.append({"kind": "abort", "t": exc.time, "message": str(exc)})
            log.error("simulation aborted: %s", exc)
        bundle.events = list(self.events)
        return bundle


def run_simulation(experiment, backend=None):
    """Run an experiment in its configured coupling and model modes."""
    return CoSimulation(experiment, backend=backend).run()


def run_aggregated_mode(experiment, backend=None):
    """Schedule storage from lumped per-area equivalents and replay the
    schedule against the detailed feeders."""
    exp = experiment.with_schedule(model="aggregated")
    return CoSimulation(exp, backend=backend).run()
