"""Experiment bundles: the 9-bus case with three feeders, storage, profiles,
controller settings and schedule, plus the catalog of named presets.

Catalog names are ``<family>-<vi>-<coupling>``, e.g. ``bess-high-tc``:

=================  ==============================================
family             meaning
=================  ==============================================
no-bess            feeders with PV only
bess               10 equal units per feeder, co-simulation AGC
cosim-equal        alias of ``bess``
cosim-hetero       10 heterogeneous units per feeder
aggregated-equal   equal units, AGC schedules a lumped model
aggregated-hetero  heterogeneous units, lumped scheduling
weak-feeder        one long low-voltage lateral carrying the storage,
                   plus a 20 MW load drop at bus 5 (t = 10 s) that drives
                   the storage to full charge
=================  ==============================================

``vi`` is ``low``, ``med`` or ``high``; ``coupling`` is ``tc`` or ``lc``.
Two transmission-only presets, ``step-droop`` and ``step-agc``, apply a
10 MW load step at bus 5 with AGC off and on.
"""
from dataclasses import asdict, dataclass, field, replace
import json
import math
from pathlib import Path

import numpy as np

from ..bess import BessUnit, load_roster, save_roster
from ..distribution.feeder import (BessAttachment, Feeder, LoadPoint, Node, PvSystem, Segment,
                                   LATERAL_R, LATERAL_X, TRUNK_R, TRUNK_X, load_feeder,
                                   save_feeder, synthetic_feeder)
from ..errors import ConfigurationError
from ..transmission.case import default_case, load_case, save_case
from .profiles import (clear_sky_profile, generate_load_profile, generate_pv_profile,
                       load_profiles, write_profile)

VI_TARGETS = {"low": 1.33, "med": 6.29, "high": 15.58}
FAMILIES = ("no-bess", "bess", "cosim-equal", "cosim-hetero", "aggregated-equal",
            "aggregated-hetero", "weak-feeder")
COUPLINGS = ("tc", "lc")
SPECIAL = ("step-droop", "step-agc")
UNITS_PER_FEEDER = 10
UNIT_KW = 10.0
UNIT_KWH = 4.21
HETERO_SPREAD = 10.0


# settings -----------------------------------------------------------------

@dataclass
class SimulationSchedule:
    dt_transmission: float = 1e-3
    dt_distribution: float = 1.0
    dt_agc: float = 4.0
    horizon: float = 3600.0
    coupling: str = "tc"
    tc_tolerance: float = 1e-4
    tc_max_iterations: int = 20
    model: str = "cosim"
    damping: float = 1.0
    abort_on_nonconvergence: bool = False

    def __post_init__(self):
        self.validate()

    @staticmethod
    def _ratio(a, b, what):
        r = a / b
        if r < 1 - 1e-9 or abs(r - round(r)) > 1e-9 * max(1.0, r):
            raise ConfigurationError(f"{what} must be an integer multiple")
        return int(round(r))

    def validate(self):
        if min(self.dt_transmission, self.dt_distribution, self.dt_agc) <= 0:
            raise ConfigurationError("time steps must be positive")
        self._ratio(self.dt_distribution, self.dt_transmission,
                    "dt_distribution of dt_transmission")
        self._ratio(self.dt_agc, self.dt_distribution, "dt_agc of dt_distribution")
        if self.horizon < 0:
            raise ConfigurationError("horizon must be >= 0")
        if self.coupling not in COUPLINGS:
            raise ConfigurationError(f"coupling must be one of {COUPLINGS}")
        if self.model not in ("cosim", "aggregated"):
            raise ConfigurationError("model must be 'cosim' or 'aggregated'")
        if not self.tc_tolerance > 0:
            raise ConfigurationError("tc_tolerance must be > 0")
        if self.tc_max_iterations < 1:
            raise ConfigurationError("tc_max_iterations must be >= 1")
        if not 0 < self.damping <= 1:
            raise ConfigurationError("damping must be in (0, 1]")

    @property
    def substeps(self):
        return self._ratio(self.dt_distribution, self.dt_transmission, "")

    @property
    def agc_every(self):
        return self._ratio(self.dt_agc, self.dt_distribution, "")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt_distribution))


@dataclass
class LoopGains:
    tau: float
    kp: float
    ki: float


@dataclass
class ControllerConfig:
    """AGC settings. ``beta`` and ``participation`` default per area to the
    natural frequency response and reserve-proportional factors."""

    enabled: bool = True
    interval: float = 4.0
    conventional: LoopGains = field(default_factory=lambda: LoopGains(60.0, 2.0, 0.04))
    storage: LoopGains = field(default_factory=lambda: LoopGains(1.0, 20.0, 10.0))
    beta: dict = field(default_factory=dict)
    participation: dict = field(default_factory=dict)

    def to_dict(self):
        return {"enabled": self.enabled, "interval": self.interval,
                "conventional": asdict(self.conventional), "storage": asdict(self.storage),
                "beta": {str(k): v for k, v in self.beta.items()},
                "participation": {str(k): v for k, v in self.participation.items()}}

    @classmethod
    def from_dict(cls, d):
        base = cls()
        return cls(enabled=d.get("enabled", True), interval=float(d.get("interval", 4.0)),
                   conventional=LoopGains(**d["conventional"]) if "conventional" in d else base.conventional,
                   storage=LoopGains(**d["storage"]) if "storage" in d else base.storage,
                   beta={int(k): float(v) for k, v in d.get("beta", {}).items()},
                   participation={int(k): dict(v) for k, v in d.get("participation", {}).items()})


@dataclass
class Disturbance:
    time: float
    pcc: int
    dp_mw: float


@dataclass
class FeederBinding:
    """A feeder attached at a PCC bus; ``profiles`` maps PV profile roles
    to profile ids, ``load_profile`` scales all feeder loads."""

    feeder: Feeder
    pcc_bus: int
    profiles: dict = field(default_factory=dict)
    load_profile: str | None = None


@dataclass
class ScenarioCase:
    name: str
    seed: int = 0
    bess_scheme: str = "equal"
    disturbances: list = field(default_factory=list)
    variability: str = ""


@dataclass
class Experiment:
    name: str
    system: object
    feeders: list
    units: list
    profiles: dict
    controller: ControllerConfig
    schedule: SimulationSchedule
    scenario: ScenarioCase

    def with_schedule(self, **kw):
        return replace(self, schedule=replace(self.schedule, **kw))

    def profile_for(self, binding, role):
        return self.profiles[binding.profiles.get(role, role)]


# capacity schemes -----------------------------------------------------------

def equal_capacities(n=UNITS_PER_FEEDER, kw=UNIT_KW):
    return [kw] * n


def heterogeneous_capacities(n=UNITS_PER_FEEDER, total_kw=UNIT_KW * UNITS_PER_FEEDER,
                             spread=HETERO_SPREAD):
    """Geometric sizes with largest/smallest ratio ``spread``, normalized to ``total_kw``."""
    r = spread ** (1.0 / (n - 1)) if n > 1 else 1.0
    w = r ** np.arange(n)
    return (w * total_kw / w.sum()).tolist()


def make_units(feeder_name, capacities, hours=UNIT_KWH / UNIT_KW, soc=0.5):
    return [BessUnit(id=f"{feeder_name}.b{k}", p_kw=float(p), e_kwh=float(p * hours),
                     soc=soc, feeder=feeder_name)
            for k, p in enumerate(capacities)]


# catalog ---------------------------------------------------------------------

def catalog():
    """All preset names."""
    names = [f"{f}-{v}-{c}" for f in FAMILIES for v in VI_TARGETS for c in COUPLINGS]
    return names + list(SPECIAL)


def parse_case_name(name):
    if name in SPECIAL:
        return name, None, "tc"
    parts = name.split("-")
    if len(parts) < 3 or parts[-1] not in COUPLINGS or parts[-2] not in VI_TARGETS:
        raise ConfigurationError(f"unknown case {name!r}; run 'catalog' for the list")
    family = "-".join(parts[:-2])
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown case family {family!r} in {name!r}")
    return family, parts[-2], parts[-1]


FEEDER_PCC = (5, 6, 8)


def _attach_units(feeder, units, seed):
    """Place units evenly along the feeder on seeded phases."""
    rng = np.random.default_rng(seed + 7919)
    spots = np.linspace(1, len(feeder.nodes) - 1, len(units)).round().astype(int)
    bess = []
    out = []
    for unit, spot in zip(units, spots):
        node = feeder.nodes[int(spot)]
        ph = node.phases[int(rng.integers(len(node.phases)))]
        bess.append(BessAttachment(unit.id, node.id, ph))
        out.append(replace(unit, node=node.id, phases=ph))
    return replace(feeder, bess=bess), out


def weak_feeder(name, seed=0):
    """4.16 kV feeder whose storage sits at the end of a long single-phase lateral."""
    base_kv = 4.16
    nodes = [Node(f"{name}.n{k}", "abc", base_kv) for k in range(6)]
    segs = [Segment(f"{name}.s{k}", f"{name}.n{k - 1}", f"{name}.n{k}", 0.4,
                    TRUNK_R.tolist(), TRUNK_X.tolist()) for k in range(1, 6)]
    prev = f"{name}.n5"
    for k in range(6, 12):
        nodes.append(Node(f"{name}.n{k}", "a", base_kv))
        segs.append(Segment(f"{name}.s{k}", prev, f"{name}.n{k}", 0.5, [[LATERAL_R]], [[LATERAL_X]]))
        prev = f"{name}.n{k}"
    tan_phi = math.tan(math.acos(0.95))
    loads = []
    for n in nodes[1:]:
        kw = 120.0 if n.phases == "abc" else 6.0
        for ph in n.phases:
            loads.append(LoadPoint(f"{n.id}.ld{ph}", n.id, ph, kw / len(n.phases),
                                   kw / len(n.phases) * tan_phi))
    pv = [PvSystem(f"{name}.pv0", f"{name}.n3", "b", 150.0, "pv")]
    return Feeder(name=name, head=nodes[0].id, nodes=nodes, segments=segs, loads=loads, pv=pv)


def build_experiment(name="bess-high-tc", seed=1, horizon=3600.0, **schedule_kw):
    """Full simulation inputs for a catalog preset."""
    family, vi, coupling = parse_case_name(name)
    system = default_case()
    model = "aggregated" if family.startswith("aggregated") else "cosim"
    schedule = SimulationSchedule(horizon=horizon, coupling=coupling, model=model, **schedule_kw)
    controller = ControllerConfig()
    if family in SPECIAL:
        controller.enabled = family == "step-agc"
        scenario = ScenarioCase(name, seed, "none", [Disturbance(1.0, 5, 10.0)])
        return Experiment(name, system, [], [], {}, controller, schedule, scenario)

    scheme = "none" if family == "no-bess" else ("heterogeneous" if "hetero" in family else "equal")
    duration = max(horizon, 1.0)
    profiles = {}
    pv = generate_pv_profile(VI_TARGETS[vi], seed=seed, id=f"pv-{vi}",
                             base=clear_sky_profile(duration=math.ceil(duration)))
    profiles[pv.id] = pv
    feeders, units = [], []
    for k, bus in enumerate(FEEDER_PCC):
        fname = f"F{bus}"
        lp = generate_load_profile(seed=seed * 100 + k, duration=math.ceil(duration),
                                   id=f"load-{fname}")
        profiles[lp.id] = lp
        if family == "weak-feeder" and k == 0:
            feeder = weak_feeder(fname, seed)
        else:
            feeder = synthetic_feeder(fname, n_nodes=24, n_laterals=3, seed=seed * 10 + k,
                                      load_kw_per_node=150.0, pv_count=10, pv_profile="pv")
        if scheme != "none":
            caps = heterogeneous_capacities() if scheme == "heterogeneous" else equal_capacities()
            mine = make_units(fname, caps)
            if family == "weak-feeder" and k == 0:
                end = feeder.nodes[-1]
                feeder = replace(feeder, bess=[BessAttachment(u.id, end.id, end.phases)
                                               for u in mine])
                mine = [replace(u, node=end.id, phases=end.phases) for u in mine]
            else:
                feeder, mine = _attach_units(feeder, mine, seed * 10 + k)
            units.extend(mine)
        feeders.append(FeederBinding(feeder, bus, {"pv": pv.id}, lp.id))
    disturbances = [Disturbance(10.0, FEEDER_PCC[0], -20.0)] if family == "weak-feeder" else []
    scenario = ScenarioCase(name, seed, scheme, disturbances, vi)
    exp = Experiment(name, system, feeders, units, profiles, controller, schedule, scenario)
    validate_experiment(exp)
    return exp


# validation ------------------------------------------------------------------

def validate_experiment(exp):
    """Cross-file checks: every reference resolves and every time base lines up."""
    system = exp.system
    sched = exp.schedule
    sched.validate()
    if exp.controller.interval != sched.dt_agc:
        raise ConfigurationError(
            f"controller interval {exp.controller.interval} differs from dt_agc {sched.dt_agc}")
    pcc = set(system.pcc_buses)
    seen = set()
    for b in exp.feeders:
        if b.pcc_bus not in pcc:
            raise ConfigurationError(f"feeder {b.feeder.name}: bus {b.pcc_bus} is not a PCC bus")
        if b.pcc_bus in seen:
            raise ConfigurationError(f"PCC bus {b.pcc_bus} bound to more than one feeder")
        seen.add(b.pcc_bus)
        for p in b.feeder.pv:
            pid = b.profiles.get(p.profile, p.profile)
            if pid not in exp.profiles:
                raise ConfigurationError(f"feeder {b.feeder.name}: PV {p.id} profile {pid!r} not loaded")
            if exp.profiles[pid].kind != "pv":
                raise ConfigurationError(f"profile {pid!r} bound to PV is not kind 'pv'")
        if b.load_profile is not None:
            if b.load_profile not in exp.profiles:
                raise ConfigurationError(
                    f"feeder {b.feeder.name}: load profile {b.load_profile!r} not loaded")
            if exp.profiles[b.load_profile].kind != "load":
                raise ConfigurationError(f"profile {b.load_profile!r} bound to load is not kind 'load'")
    names = [b.feeder.name for b in exp.feeders]
    if len(set(names)) != len(names):
        raise ConfigurationError("duplicate feeder names")
    units = {u.id: u for u in exp.units}
    if len(units) != len(exp.units):
        raise ConfigurationError("duplicate BESS unit ids in roster")
    attached = {}
    for b in exp.feeders:
        for att in b.feeder.bess:
            if att.unit not in units:
                raise ConfigurationError(f"feeder {b.feeder.name}: BESS {att.unit} not in roster")
            u = units[att.unit]
            if u.feeder != b.feeder.name or u.node != att.node or u.phases != att.phases:
                raise ConfigurationError(f"BESS {att.unit}: roster location disagrees with feeder file")
            attached[att.unit] = b.feeder.name
    loose = set(units) - set(attached)
    if loose:
        raise ConfigurationError(f"BESS units not attached to any feeder: {sorted(loose)}")
    for prof in exp.profiles.values():
        if sched.horizon > 0 and prof.duration + 1e-9 < sched.horizon:
            raise ConfigurationError(
                f"profile {prof.id} covers {prof.duration} s, shorter than horizon {sched.horizon} s")
    area_ids = {a.id for a in system.areas}
    for a, beta in exp.controller.beta.items():
        if a not in area_ids or beta <= 0:
            raise ConfigurationError(f"controller beta for area {a} invalid")
    owner = system.area_of_bus()
    for a, pf in exp.controller.participation.items():
        if a not in area_ids:
            raise ConfigurationError(f"participation for unknown area {a}")
        for gid in pf:
            g = system.generator(gid)
            if not g.agc or owner[g.bus] != a:
                raise ConfigurationError(f"participation: {gid} is not an AGC unit of area {a}")
        if abs(sum(pf.values()) - 1.0) > 1e-9:
            raise ConfigurationError(f"participation factors of area {a} do not sum to 1")
    buses = set(system.bus_ids)
    for d in exp.scenario.disturbances:
        if d.pcc not in buses:
            raise ConfigurationError(f"disturbance at unknown bus {d.pcc}")
        if d.time < 0:
            raise ConfigurationError("disturbance time must be >= 0")
    return exp


# files -----------------------------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["name", "schedule", "transmission_case", "feeders", "profiles", "controller"],
    "properties": {
        "name": {"type": "string"},
        "schedule": {
            "type": "object",
            "properties": {
                "dt_transmission": {"type": "number", "exclusiveMinimum": 0},
                "dt_distribution": {"type": "number", "exclusiveMinimum": 0},
                "dt_agc": {"type": "number", "exclusiveMinimum": 0},
                "horizon": {"type": "number", "minimum": 0},
                "coupling": {"enum": list(COUPLINGS)},
                "tc_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "tc_max_iterations": {"type": "integer", "minimum": 1},
                "model": {"enum": ["cosim", "aggregated"]},
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "abort_on_nonconvergence": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "transmission_case": {"type": "string"},
        "feeders": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["file", "pcc_bus"],
                "properties": {
                    "file": {"type": "string"},
                    "pcc_bus": {"type": "integer"},
                    "profiles": {"type": "object", "additionalProperties": {"type": "string"}},
                    "load_profile": {"type": ["string", "null"]},
                },
                "additionalProperties": False,
            },
        },
        "bess_roster": {"type": ["string", "null"]},
        "profiles": {"type": "array", "items": {"type": "string"}},
        "controller": {
            "type": "object",
            "properties": {
                "enabled": {"type": "boolean"},
                "interval": {"type": "number", "exclusiveMinimum": 0},
                "conventional": {"$ref": "#/$defs/loop"},
                "storage": {"$ref": "#/$defs/loop"},
                "beta": {"type": "object", "additionalProperties": {"type": "number"}},
                "participation": {"type": "object"},
            },
            "additionalProperties": False,
        },
        "scenario": {
            "type": "object",
            "properties": {
                "seed": {"type": "integer"},
                "bess_scheme": {"enum": ["none", "equal", "heterogeneous"]},
                "variability": {"type": "string"},
                "disturbances": {
                    "type": "array",
                    "items": {"type": "object", "required": ["time", "pcc", "dp_mw"]},
                },
            },
        },
    },
    "$defs": {
        "loop": {
            "type": "object",
            "required": ["tau", "kp", "ki"],
            "properties": {"tau": {"type": "number", "minimum": 0},
                           "kp": {"type": "number"}, "ki": {"type": "number"}},
            "additionalProperties": False,
        }
    },
}


def write_experiment(exp, directory):
    """Write a self-contained config directory; returns the config path."""
    d = Path(directory)
    (d / "feeders").mkdir(parents=True, exist_ok=True)
    (d / "profiles").mkdir(exist_ok=True)
    save_case(exp.system, d / "case.json")
    feeders = []
    for b in exp.feeders:
        rel = f"feeders/{b.feeder.name}.json"
        save_feeder(b.feeder, d / rel)
        feeders.append({"file": rel, "pcc_bus": b.pcc_bus, "profiles": dict(b.profiles),
                        "load_profile": b.load_profile})
    for p in exp.profiles.values():
        write_profile(p, d / "profiles" / f"{p.id}.txt")
    save_roster(exp.units, d / "roster.csv")
    config = {
        "name": exp.name,
        "schedule": asdict(exp.schedule),
        "transmission_case": "case.json",
        "feeders": feeders,
        "bess_roster": "roster.csv",
        "profiles": ["profiles"],
        "controller": exp.controller.to_dict(),
        "scenario": {"seed": exp.scenario.seed, "bess_scheme": exp.scenario.bess_scheme,
                     "disturbances": [asdict(x) for x in exp.scenario.disturbances],
                     "variability": exp.scenario.variability},
    }
    path = d / "config.json"
    path.write_text(json.dumps(config, indent=2))
    return path


def load_experiment(path):
    """Read and fully validate a config file and everything it references."""
    import jsonschema

    path = Path(path)
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"{path}: {where}: {exc.message}") from exc
    base = path.parent
    system = load_case(base / config["transmission_case"])
    profiles = load_profiles([base / p for p in config["profiles"]])
    bindings = [FeederBinding(load_feeder(base / f["file"]), f["pcc_bus"], f.get("profiles", {}),
                              f.get("load_profile")) for f in config["feeders"]]
    roster = config.get("bess_roster")
    units = load_roster(base / roster) if roster else []
    sc = config.get("scenario", {})
    scenario = ScenarioCase(config["name"], sc.get("seed", 0), sc.get("bess_scheme", "equal"),
                            [Disturbance(**x) for x in sc.get("disturbances", [])],
                            sc.get("variability", ""))
    exp = Experiment(config["name"], system, bindings, units, profiles,
                     ControllerConfig.from_dict(config["controller"]),
                     SimulationSchedule(**config["schedule"]), scenario)
    return validate_experiment(exp)
