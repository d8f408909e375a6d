"""Transmission case data model and JSON case-file I/O.

Case file layout (all impedances in pu on ``base_mva``)::

    {
      "name": "...", "base_mva": 100.0, "f0_hz": 60.0,
      "buses":      [{"id": 1, "type": "slack|pv|pq|pcc", "base_kv": 16.5,
                      "v_set": 1.04}],
      "branches":   [{"id": "L4-6", "from": 4, "to": 6,
                      "r": 0.017, "x": 0.092, "b": 0.158}],
      "generators": [{"id": "G1", "bus": 1, "p_mw": 70.0, "mva": 247.5,
                      "H": 9.55, "D": 2.0, "xd_prime": 0.15, "R": 0.05,
                      "Tg": 0.2, "Tt": 0.3, "agc": false,
                      "reserve_up_mw": 0.0, "reserve_down_mw": 0.0}],
      "loads":      [{"bus": 5, "p_mw": 125.0, "q_mvar": 50.0}],
      "areas":      [{"id": 1, "buses": [1, 4, 5],
                      "interchange_generator": null}],
      "tie_lines":  [{"branch": "L6-9", "from_area": 2, "to_area": 1,
                      "schedule_mw": 1.5}]
    }

Generator ``H``, ``D``, ``xd_prime`` and ``R`` are on the machine base
(``mva``). ``interchange_generator`` names the unit whose output the
initial power flow adjusts to meet the area's scheduled net export.
"""
from collections import deque
from dataclasses import asdict, dataclass, field
import json
from pathlib import Path

from ..errors import ConfigurationError

BUS_TYPES = ("slack", "pv", "pq", "pcc")


@dataclass
class Bus:
    id: int
    type: str = "pq"
    base_kv: float = 230.0
    v_set: float = 1.0


@dataclass
class Branch:
    id: str
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0


@dataclass
class GeneratorUnit:
    id: str
    bus: int
    p_mw: float
    mva: float
    H: float
    D: float
    xd_prime: float
    R: float
    Tg: float = 0.2
    Tt: float = 0.3
    agc: bool = False
    reserve_up_mw: float = 0.0
    reserve_down_mw: float = 0.0

    def validate(self):
        if self.H <= 0:
            raise ConfigurationError(f"generator {self.id}: H must be > 0")
        if self.R <= 0:
            raise ConfigurationError(f"generator {self.id}: R must be > 0")
        if self.Tg < 0 or self.Tt < 0:
            raise ConfigurationError(f"generator {self.id}: time constants must be >= 0")
        if self.reserve_up_mw < 0 or self.reserve_down_mw < 0:
            raise ConfigurationError(f"generator {self.id}: reserves must be >= 0")
        if self.xd_prime <= 0 or self.mva <= 0:
            raise ConfigurationError(f"generator {self.id}: xd_prime and mva must be > 0")


@dataclass
class Load:
    bus: int
    p_mw: float
    q_mvar: float = 0.0


@dataclass
class Area:
    id: int
    buses: list
    interchange_generator: str | None = None


@dataclass
class TieLine:
    branch: str
    from_area: int
    to_area: int
    schedule_mw: float = 0.0


@dataclass
class TransmissionSystem:
    buses: list
    branches: list
    generators: list
    areas: list
    tie_lines: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    base_mva: float = 100.0
    f0_hz: float = 60.0
    name: str = "case"

    def __post_init__(self):
        self.validate()

    # lookups -----------------------------------------------------------
    @property
    def bus_ids(self):
        return [b.id for b in self.buses]

    def bus_index(self):
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def pcc_buses(self):
        return [b.id for b in self.buses if b.type == "pcc"]

    @property
    def slack_bus(self):
        return next(b.id for b in self.buses if b.type == "slack")

    def area_of_bus(self):
        return {bus: a.id for a in self.areas for bus in a.buses}

    def branch(self, branch_id):
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise KeyError(branch_id)

    def generator(self, gen_id):
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise KeyError(gen_id)

    def area_generators(self, area_id):
        owner = self.area_of_bus()
        return [g for g in self.generators if owner[g.bus] == area_id]

    def area_schedule(self, area_id):
        """Scheduled net export of an area in MW (export-positive)."""
        total = 0.0
        for tie in self.tie_lines:
            if tie.from_area == area_id:
                total += tie.schedule_mw
            elif tie.to_area == area_id:
                total -= tie.schedule_mw
        return total

    def nominal_loads(self):
        """Nominal bus loads as ``{bus: complex MVA}``."""
        out = {}
        for ld in self.loads:
            out[ld.bus] = out.get(ld.bus, 0j) + complex(ld.p_mw, ld.q_mvar)
        return out

    # validation --------------------------------------------------------
    def validate(self):
        ids = self.bus_ids
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate bus ids")
        for b in self.buses:
            if b.type not in BUS_TYPES:
                raise ConfigurationError(f"bus {b.id}: unknown type {b.type!r}")
        slack = [b for b in self.buses if b.type == "slack"]
        if len(slack) != 1:
            raise ConfigurationError(f"expected exactly one slack bus, found {len(slack)}")
        known = set(ids)
        adj = {i: set() for i in ids}
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise ConfigurationError(f"branch {br.id} references unknown bus")
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
        seen = {ids[0]}
        queue = deque([ids[0]])
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        if seen != known:
            raise ConfigurationError(f"network is not connected; isolated buses {sorted(known - seen)}")
        for g in self.generators:
            if g.bus not in known:
                raise ConfigurationError(f"generator {g.id} at unknown bus {g.bus}")
            g.validate()
        slack_id = slack[0].id
        if not any(g.bus == slack_id for g in self.generators):
            raise ConfigurationError("slack bus has no generator")
        for ld in self.loads:
            if ld.bus not in known:
                raise ConfigurationError(f"load at unknown bus {ld.bus}")
        membership = {}
        for a in self.areas:
            for bus in a.buses:
                if bus not in known:
                    raise ConfigurationError(f"area {a.id} lists unknown bus {bus}")
                if bus in membership:
                    raise ConfigurationError(f"bus {bus} belongs to areas {membership[bus]} and {a.id}")
                membership[bus] = a.id
        if self.areas and set(membership) != known:
            raise ConfigurationError(f"buses without area: {sorted(known - set(membership))}")
        for bus in self.pcc_buses:
            if self.areas and bus not in membership:
                raise ConfigurationError(f"PCC bus {bus} has no area")
        area_ids = {a.id for a in self.areas}
        for tie in self.tie_lines:
            br = self.branch(tie.branch)
            fa, ta = membership[br.from_bus], membership[br.to_bus]
            if fa == ta:
                raise ConfigurationError(f"tie line {tie.branch} lies inside area {fa}")
            if {fa, ta} != {tie.from_area, tie.to_area} or not {fa, ta} <= area_ids:
                raise ConfigurationError(f"tie line {tie.branch} areas do not match its buses")
        for a in self.areas:
            if a.interchange_generator is not None:
                g = self.generator(a.interchange_generator)
                if membership[g.bus] != a.id:
                    raise ConfigurationError(f"interchange generator {g.id} is outside area {a.id}")

    # I/O ---------------------------------------------------------------
    def to_dict(self):
        return {
            "name": self.name,
            "base_mva": self.base_mva,
            "f0_hz": self.f0_hz,
            "buses": [asdict(b) for b in self.buses],
            "branches": [
                {"id": br.id, "from": br.from_bus, "to": br.to_bus,
                 "r": br.r, "x": br.x, "b": br.b}
                for br in self.branches
            ],
            "generators": [asdict(g) for g in self.generators],
            "loads": [asdict(ld) for ld in self.loads],
            "areas": [asdict(a) for a in self.areas],
            "tie_lines": [asdict(t) for t in self.tie_lines],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                name=data.get("name", "case"),
                base_mva=float(data.get("base_mva", 100.0)),
                f0_hz=float(data.get("f0_hz", 60.0)),
                buses=[Bus(**b) for b in data["buses"]],
                branches=[
                    Branch(id=str(br["id"]), from_bus=br["from"], to_bus=br["to"],
                           r=float(br["r"]), x=float(br["x"]), b=float(br.get("b", 0.0)))
                    for br in data["branches"]
                ],
                generators=[GeneratorUnit(**g) for g in data["generators"]],
                loads=[Load(**ld) for ld in data.get("loads", [])],
                areas=[Area(**a) for a in data.get("areas", [])],
                tie_lines=[TieLine(**t) for t in data.get("tie_lines", [])],
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed transmission case: {exc}") from exc


def load_case(path):
    with open(path) as fh:
        return TransmissionSystem.from_dict(json.load(fh))


def save_case(system, path):
    Path(path).write_text(json.dumps(system.to_dict(), indent=2))


def default_case_path():
    return Path(__file__).resolve().parent.parent / "data" / "ieee9_two_area.json"


def default_case():
    """The shipped two-area 9-bus case with representative machine data."""
    return load_case(default_case_path())
