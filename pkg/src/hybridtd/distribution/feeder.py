"""Three-phase radial feeder data model, JSON feeder files and a synthetic generator.

Feeder file layout::

    {
      "name": "feeder-5", "head": "n0", "s_base_kva": 1000.0,
      "v_limits": [0.95, 1.05],
      "nodes":    [{"id": "n0", "phases": "abc", "base_kv": 13.2}],
      "segments": [{"id": "s1", "from": "n0", "to": "n1", "length": 0.5,
                    "r": [[...3x3 ohm/length...]], "x": [[...]],
                    "tap": 1.0}],
      "loads":    [{"id": "ld1", "node": "n1", "phase": "a",
                    "kw": 120.0, "kvar": 40.0}],
      "pv":       [{"id": "pv1", "node": "n3", "phases": "b",
                    "kw_rated": 80.0, "profile": "pv-high"}],
      "bess":     [{"unit": "b1", "node": "n7", "phases": "c"}]
    }

Segment matrices are square over the phases of the ``to`` node, in ohm per
unit length; ``tap`` is an off-nominal ratio for transformer segments
(nominal ratios are implied by the node base voltages). Loads are
constant-power, PV and BESS operate at unity power factor.
"""
from collections import deque
from dataclasses import asdict, dataclass, field
import json
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError

PHASES = "abc"


@dataclass
class Node:
    id: str
    phases: str = "abc"
    base_kv: float = 13.2


@dataclass
class Segment:
    id: str
    from_node: str
    to_node: str
    length: float
    r: list
    x: list
    tap: float = 1.0

    def z_ohm(self):
        return (np.asarray(self.r, float) + 1j * np.asarray(self.x, float)) * self.length


@dataclass
class LoadPoint:
    id: str
    node: str
    phase: str
    kw: float
    kvar: float = 0.0


@dataclass
class PvSystem:
    id: str
    node: str
    phases: str
    kw_rated: float
    profile: str = "pv"


@dataclass
class BessAttachment:
    unit: str
    node: str
    phases: str


@dataclass
class Feeder:
    name: str
    head: str
    nodes: list
    segments: list
    loads: list = field(default_factory=list)
    pv: list = field(default_factory=list)
    bess: list = field(default_factory=list)
    s_base_kva: float = 1000.0
    v_limits: tuple = (0.95, 1.05)

    def __post_init__(self):
        self.v_limits = tuple(self.v_limits)
        self.validate()

    def node_map(self):
        return {n.id: n for n in self.nodes}

    def validate(self):
        nodes = self.node_map()
        if len(nodes) != len(self.nodes):
            raise ConfigurationError(f"feeder {self.name}: duplicate node ids")
        if self.head not in nodes:
            raise ConfigurationError(f"feeder {self.name}: head node {self.head!r} missing")
        for n in self.nodes:
            if not n.phases or set(n.phases) - set(PHASES) or len(set(n.phases)) != len(n.phases):
                raise ConfigurationError(f"feeder {self.name}: node {n.id} has invalid phases {n.phases!r}")
        parent = {}
        children = {nid: [] for nid in nodes}
        for seg in self.segments:
            if seg.from_node not in nodes or seg.to_node not in nodes:
                raise ConfigurationError(f"feeder {self.name}: segment {seg.id} references unknown node")
            if seg.to_node in parent or seg.to_node == self.head:
                raise ConfigurationError(
                    f"feeder {self.name}: non-radial topology, node {seg.to_node} has multiple sources")
            parent[seg.to_node] = seg
            children[seg.from_node].append(seg.to_node)
            ph_to, ph_from = nodes[seg.to_node].phases, nodes[seg.from_node].phases
            if set(ph_to) - set(ph_from):
                raise ConfigurationError(
                    f"feeder {self.name}: segment {seg.id} carries phases absent upstream")
            z = seg.z_ohm()
            if z.shape != (len(ph_to), len(ph_to)):
                raise ConfigurationError(
                    f"feeder {self.name}: segment {seg.id} impedance must be {len(ph_to)}x{len(ph_to)}")
            if not np.allclose(z, z.T):
                raise ConfigurationError(f"feeder {self.name}: segment {seg.id} impedance not symmetric")
            if seg.length <= 0 or seg.tap <= 0:
                raise ConfigurationError(f"feeder {self.name}: segment {seg.id} needs positive length and tap")
        seen = {self.head}
        queue = deque([self.head])
        while queue:
            for c in children[queue.popleft()]:
                if c in seen:
                    raise ConfigurationError(f"feeder {self.name}: non-radial topology at {c}")
                seen.add(c)
                queue.append(c)
        if seen != set(nodes):
            raise ConfigurationError(
                f"feeder {self.name}: non-radial topology, unreachable nodes {sorted(set(nodes) - seen)}")
        for ld in self.loads:
            if ld.node not in nodes or ld.phase not in nodes[ld.node].phases or len(ld.phase) != 1:
                raise ConfigurationError(f"feeder {self.name}: load {ld.id} on missing node/phase")
        for dev in list(self.pv) + list(self.bess):
            did = getattr(dev, "id", None) or dev.unit
            if dev.node not in nodes or set(dev.phases) - set(nodes[dev.node].phases) or not dev.phases:
                raise ConfigurationError(f"feeder {self.name}: device {did} on missing node/phase")

    @property
    def total_load_kw(self):
        return sum(ld.kw for ld in self.loads)

    # I/O ---------------------------------------------------------------
    def to_dict(self):
        return {
            "name": self.name, "head": self.head, "s_base_kva": self.s_base_kva,
            "v_limits": list(self.v_limits),
            "nodes": [asdict(n) for n in self.nodes],
            "segments": [
                {"id": s.id, "from": s.from_node, "to": s.to_node, "length": s.length,
                 "r": np.asarray(s.r, float).tolist(), "x": np.asarray(s.x, float).tolist(),
                 "tap": s.tap}
                for s in self.segments
            ],
            "loads": [asdict(ld) for ld in self.loads],
            "pv": [asdict(p) for p in self.pv],
            "bess": [asdict(b) for b in self.bess],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                name=data["name"], head=data["head"],
                s_base_kva=float(data.get("s_base_kva", 1000.0)),
                v_limits=tuple(data.get("v_limits", (0.95, 1.05))),
                nodes=[Node(**n) for n in data["nodes"]],
                segments=[
                    Segment(id=s["id"], from_node=s["from"], to_node=s["to"],
                            length=float(s["length"]), r=s["r"], x=s["x"],
                            tap=float(s.get("tap", 1.0)))
                    for s in data["segments"]
                ],
                loads=[LoadPoint(**ld) for ld in data.get("loads", [])],
                pv=[PvSystem(**p) for p in data.get("pv", [])],
                bess=[BessAttachment(**b) for b in data.get("bess", [])],
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed feeder file: {exc}") from exc


def load_feeder(path):
    with open(path) as fh:
        return Feeder.from_dict(json.load(fh))


def save_feeder(feeder, path):
    Path(path).write_text(json.dumps(feeder.to_dict(), indent=1))


# synthetic feeders ------------------------------------------------------

# Overhead 336 kcmil ACSR four-wire line, ohm per km.
TRUNK_R = np.array([[0.2843, 0.0969, 0.0954],
                    [0.0969, 0.2900, 0.0982],
                    [0.0954, 0.0982, 0.2868]])
TRUNK_X = np.array([[0.6698, 0.3117, 0.2392],
                    [0.3117, 0.6513, 0.2632],
                    [0.2392, 0.2632, 0.6618]])
# Single-phase 1/0 ACSR lateral with neutral, ohm per km.
LATERAL_R = 0.8259
LATERAL_X = 0.8373


def synthetic_feeder(name="feeder", n_nodes=24, n_laterals=3, seed=0,
                     load_kw_per_node=200.0, power_factor=0.95,
                     length_range=(0.3, 0.7), lateral_fraction=0.3,
                     pv_count=10, pv_kw_range=(50.0, 400.0), pv_profile="pv",
                     bess_units=(), base_kv=13.2, s_base_kva=1000.0,
                     lossless=False):
    """Seeded radial feeder: a three-phase trunk with single-phase laterals.

    Loads are placed on every non-head node phase with +-30 % spread;
    PV systems are placed at uniformly chosen node-phases with log-uniform
    sizes. ``bess_units`` are attached at evenly spaced nodes along the
    feeder on seeded phases.
    """
    rng = np.random.default_rng(seed)
    n_lat_nodes = int(round((n_nodes - 1) * lateral_fraction)) if n_laterals else 0
    n_trunk = n_nodes - n_lat_nodes
    nodes = [Node(f"{name}.n0", "abc", base_kv)]
    segments = []
    r3 = np.zeros((3, 3)) if lossless else TRUNK_R
    for k in range(1, n_trunk):
        nodes.append(Node(f"{name}.n{k}", "abc", base_kv))
        segments.append(Segment(f"{name}.s{k}", f"{name}.n{k - 1}", f"{name}.n{k}",
                                float(rng.uniform(*length_range)), r3.tolist(), TRUNK_X.tolist()))
    counts = [n_lat_nodes // n_laterals + (1 if i < n_lat_nodes % n_laterals else 0)
              for i in range(n_laterals)] if n_laterals else []
    taps = np.linspace(1, n_trunk - 1, n_laterals + 2)[1:-1] if n_laterals else []
    k = n_trunk
    for lat, (cnt, tap_node) in enumerate(zip(counts, taps)):
        ph = PHASES[int(rng.integers(3))]
        prev = f"{name}.n{int(round(tap_node))}"
        for _ in range(cnt):
            nid = f"{name}.n{k}"
            nodes.append(Node(nid, ph, base_kv))
            r1 = 0.0 if lossless else LATERAL_R
            segments.append(Segment(f"{name}.s{k}", prev, nid, float(rng.uniform(*length_range)),
                                    [[r1]], [[LATERAL_X]]))
            prev = nid
            k += 1
    tan_phi = np.tan(np.arccos(power_factor))
    loads = []
    for n in nodes[1:]:
        per_phase = load_kw_per_node / len(n.phases)
        for ph in n.phases:
            kw = per_phase * float(rng.uniform(0.7, 1.3))
            loads.append(LoadPoint(f"{n.id}.ld{ph}", n.id, ph, kw, kw * tan_phi))
    pv = []
    for i in range(pv_count):
        n = nodes[1 + int(rng.integers(len(nodes) - 1))]
        ph = n.phases[int(rng.integers(len(n.phases)))]
        size = float(np.exp(rng.uniform(np.log(pv_kw_range[0]), np.log(pv_kw_range[1]))))
        pv.append(PvSystem(f"{name}.pv{i}", n.id, ph, size, pv_profile))
    bess = []
    if len(bess_units):
        spots = np.linspace(1, len(nodes) - 1, len(bess_units)).round().astype(int)
        for unit, spot in zip(bess_units, spots):
            n = nodes[int(spot)]
            ph = n.phases[int(rng.integers(len(n.phases)))]
            bess.append(BessAttachment(unit, n.id, ph))
    return Feeder(name=name, head=nodes[0].id, nodes=nodes, segments=segments,
                  loads=loads, pv=pv, bess=bess, s_base_kva=s_base_kva)
