"""Forward-backward sweep power flow for three-phase radial feeders.

Every non-head node phase is one unknown. With ``T`` the node-to-parent
incidence (``(T V)_c = V_c - V_parent / tap_c``) the ladder equations are

    backward:  T^T J = I            (branch currents from load currents)
    forward:   T V  = h - Z J       (node voltages from the head down)

``T`` is triangular in breadth-first order, so each sweep is a sparse
triangular solve; it is factorized once per feeder.
"""
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ..errors import ConfigurationError, ConvergenceError
from .feeder import Feeder, PHASES

A_OP = np.exp(-2j * np.pi / 3)
SEQ = np.array([1.0, A_OP, A_OP.conjugate()])


def balanced_head(v_pos):
    """Three phase voltages for a positive-sequence head phasor."""
    return complex(v_pos) * SEQ


@dataclass
class Violation:
    node: str
    phase: str
    v_pu: float
    time: float | None = None


class FeederNetwork:
    """Compiled sweep operators for one :class:`Feeder`."""

    def __init__(self, feeder: Feeder):
        self.feeder = feeder
        nodes = feeder.node_map()
        if nodes[feeder.head].phases != "abc":
            raise ConfigurationError(f"feeder {feeder.name}: head node must be three-phase")
        children = {n: [] for n in nodes}
        seg_to = {}
        for seg in feeder.segments:
            children[seg.from_node].append(seg.to_node)
            seg_to[seg.to_node] = seg
        order = []
        frontier = [feeder.head]
        while frontier:
            nxt = []
            for n in frontier:
                for c in children[n]:
                    order.append(c)
                    nxt.append(c)
            frontier = nxt
        self.order = order
        entries = [(n, ph) for n in order for ph in nodes[n].phases]
        self.entries = entries
        self.index = {e: k for k, e in enumerate(entries)}
        ne = len(entries)
        s_phase = feeder.s_base_kva / 3.0
        self.s_phase_kva = s_phase

        rows, cols, vals = [], [], []
        zrows, zcols, zvals = [], [], []
        h = np.zeros((ne, 3), dtype=complex)
        self.segments = []
        for n in order:
            seg = seg_to[n]
            ph = nodes[n].phases
            kv = nodes[n].base_kv
            z_pu = seg.z_ohm() / (kv * kv / (feeder.s_base_kva / 1000.0))
            own = [self.index[(n, p)] for p in ph]
            for a, ka in enumerate(own):
                rows.append(ka)
                cols.append(ka)
                vals.append(1.0)
                p = ph[a]
                if seg.from_node == feeder.head:
                    h[ka, PHASES.index(p)] = 1.0 / seg.tap
                else:
                    rows.append(ka)
                    cols.append(self.index[(seg.from_node, p)])
                    vals.append(-1.0 / seg.tap)
                for b, kb in enumerate(own):
                    zrows.append(ka)
                    zcols.append(kb)
                    zvals.append(z_pu[a, b])
            self.segments.append((seg, own, [self.index.get((seg.from_node, p)) for p in ph],
                                  [PHASES.index(p) for p in ph]))
        self.T = sparse.csc_matrix((vals, (rows, cols)), shape=(ne, ne), dtype=complex)
        self.Z = sparse.csr_matrix((zvals, (zrows, zcols)), shape=(ne, ne), dtype=complex)
        self.H = h
        self._lu = splu(self.T)

        self.base_demand = np.zeros(ne, dtype=complex)
        for ld in feeder.loads:
            self.base_demand[self.index[(ld.node, ld.phase)]] += complex(ld.kw, ld.kvar) / s_phase
        self.device_entries = {}
        for dev in feeder.pv:
            self.device_entries[dev.id] = [self.index[(dev.node, p)] for p in dev.phases]
        for dev in feeder.bess:
            self.device_entries[dev.unit] = [self.index[(dev.node, p)] for p in dev.phases]
        self.head_children = [k for k in range(ne) if np.any(h[k])]

    def net_demand(self, injections=None, load_scale=1.0):
        """Per-entry demand (pu): scaled loads minus device injections."""
        s = self.base_demand * load_scale
        if injections:
            s = s.copy()
            for dev, kw in injections.items():
                idx = self.device_entries[dev]
                share = complex(kw) / (len(idx) * self.s_phase_kva)
                for k in idx:
                    s[k] -= share
        return s

    def solve(self, head_voltage, injections=None, load_scale=1.0, tol=1e-8, max_iter=100):
        if not 0.5 < abs(head_voltage) < 1.5:
            raise ValueError(f"head voltage magnitude {abs(head_voltage):.4f} outside (0.5, 1.5) pu")
        vh = balanced_head(head_voltage)
        s = self.net_demand(injections, load_scale)
        v0 = self._lu.solve(self.H @ vh)
        v = v0.copy()
        loaded = s != 0
        dv = np.zeros(len(v))
        for it in range(1, max_iter + 1):
            cur = np.zeros_like(v)
            cur[loaded] = np.conj(s[loaded] / v[loaded])
            j = self._lu.solve(cur, trans="T")
            v_new = v0 - self._lu.solve(self.Z @ j)
            dv = np.abs(v_new - v)
            v = v_new
            if dv.max(initial=0.0) < tol:
                cur = np.zeros_like(v)
                cur[loaded] = np.conj(s[loaded] / v[loaded])
                j = self._lu.solve(cur, trans="T")
                return FeederSolution(self, v, j, vh, it, float(dv.max(initial=0.0)))
        worst = self.entries[int(np.argmax(dv))]
        raise ConvergenceError(
            f"feeder {self.feeder.name}: sweep did not converge in {max_iter} iterations "
            f"(worst node {worst[0]} phase {worst[1]}, dV = {dv.max():.3e} pu)",
            location=worst, mismatch=float(dv.max()))


class FeederSolution:
    """Solved node voltages (pu) and branch currents (pu) for one feeder."""

    def __init__(self, network, v, j, v_head, iterations, max_mismatch):
        self.network = network
        self.v = v
        self.j = j
        self.v_head = v_head
        self.iterations = iterations
        self.max_mismatch = max_mismatch

    def voltage(self, node, phase):
        if node == self.network.feeder.head:
            return complex(self.v_head[PHASES.index(phase)])
        return complex(self.v[self.network.index[(node, phase)]])

    def node_voltages(self):
        """``{node: array of 3 complex}`` with NaN on absent phases."""
        out = {self.network.feeder.head: self.v_head.copy()}
        for n in self.network.order:
            out[n] = np.full(3, np.nan, dtype=complex)
        for (n, ph), k in self.network.index.items():
            out[n][PHASES.index(ph)] = self.v[k]
        return out

    def segment_currents(self):
        """``{segment id: complex pu current per present phase}``."""
        return {seg.id: self.j[own] for seg, own, _, _ in self.network.segments}

    def upstream(self, src, phs):
        return np.array([self.v_head[pp] if s is None else self.v[s] for s, pp in zip(src, phs)])

    @property
    def head_power(self):
        """Complex power into the feeder head, kW + j kvar (import-positive)."""
        total = 0j
        for seg, own, src, phs in self.network.segments:
            if seg.from_node == self.network.feeder.head:
                total += np.sum(self.v_head[phs] * np.conj(self.j[own] / seg.tap))
        return total * self.network.s_phase_kva

    def losses(self):
        """Series-element losses summed over all segments, kW + j kvar."""
        total = 0j
        for seg, own, src, phs in self.network.segments:
            drop = self.upstream(src, phs) / seg.tap - self.v[own]
            total += np.sum(drop * np.conj(self.j[own]))
        return total * self.network.s_phase_kva


def _network(feeder):
    return feeder if isinstance(feeder, FeederNetwork) else FeederNetwork(feeder)


def solve_feeder(feeder, head_voltage, injections=None, load_scale=1.0, tol=1e-8, max_iter=100):
    """Solve a feeder for a positive-sequence head voltage.

    ``injections`` maps PV/BESS device ids to complex kW (generation
    positive); loads are multiplied by ``load_scale``.
    """
    return _network(feeder).solve(head_voltage, injections, load_scale, tol, max_iter)


def head_power(solution):
    return solution.head_power


def check_voltage_limits(solution, limits=None, time=None):
    """Every node phase with ``|V|`` outside ``limits``, reported once."""
    lo, hi = limits if limits is not None else solution.network.feeder.v_limits
    out = []
    for n, vv in solution.node_voltages().items():
        for k, ph in enumerate(PHASES):
            if np.isnan(vv[k]):
                continue
            mag = abs(vv[k])
            if mag < lo or mag > hi:
                out.append(Violation(n, ph, float(mag), time))
    return out
