"""Battery units: power limits, state-of-charge bookkeeping and DAA index.

Setpoints are in kW, discharge-positive. DAA (dynamic available AGC) is
the largest constant power a unit can hold for one minute without
crossing its SoC limits.
"""
import csv
from dataclasses import dataclass, replace

DAA_WINDOW_S = 60.0


@dataclass
class BessUnit:
    id: str
    p_kw: float
    e_kwh: float
    soc: float = 0.5
    soc_min: float = 0.2
    soc_max: float = 0.8
    eta_c: float = 0.95
    eta_d: float = 0.95
    feeder: str = ""
    node: str = ""
    phases: str = "a"
    setpoint_kw: float = 0.0
    daa_discharge: float = 0.0
    daa_charge: float = 0.0
    daa_with_efficiency: bool = True

    def __post_init__(self):
        if self.p_kw <= 0 or self.e_kwh <= 0:
            raise ValueError(f"BESS {self.id}: ratings must be positive")
        if not 0.0 <= self.soc_min <= self.soc <= self.soc_max <= 1.0:
            raise ValueError(f"BESS {self.id}: need 0 <= soc_min <= soc <= soc_max <= 1")
        if not (0.0 < self.eta_c <= 1.0 and 0.0 < self.eta_d <= 1.0):
            raise ValueError(f"BESS {self.id}: efficiencies must be in (0, 1]")


def compute_daa(unit):
    """``(daa_discharge, daa_charge)`` in kW for the unit's current SoC."""
    eta_d = unit.eta_d if unit.daa_with_efficiency else 1.0
    eta_c = unit.eta_c if unit.daa_with_efficiency else 1.0
    per_hour = 3600.0 / DAA_WINDOW_S
    dis = eta_d * max(unit.soc - unit.soc_min, 0.0) * unit.e_kwh * per_hour
    chg = max(unit.soc_max - unit.soc, 0.0) * unit.e_kwh * per_hour / eta_c
    return min(unit.p_kw, dis), min(unit.p_kw, chg)


def refresh_daa(unit):
    dis, chg = compute_daa(unit)
    unit.daa_discharge = dis
    unit.daa_charge = chg
    return unit


def apply_setpoint(unit, p_cmd, dt):
    """Run the unit at ``p_cmd`` kW for ``dt`` seconds.

    Power saturates at the rating; if the step would cross an SoC limit
    only the energy-feasible power is delivered. Returns
    ``(actual_kw, updated_unit)``; the input unit is not modified.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = min(max(p_cmd, -unit.p_kw), unit.p_kw)
    hours = dt / 3600.0
    soc = unit.soc
    if p > 0:
        p = min(p, (soc - unit.soc_min) * unit.e_kwh * unit.eta_d / hours)
        soc = max(soc - p * hours / (unit.eta_d * unit.e_kwh), unit.soc_min)
    elif p < 0:
        p = max(p, -(unit.soc_max - soc) * unit.e_kwh / (unit.eta_c * hours))
        soc = min(soc - p * unit.eta_c * hours / unit.e_kwh, unit.soc_max)
    return p, replace(unit, soc=soc, setpoint_kw=p_cmd)


def fleet_daa(units, direction="discharge"):
    """Sum of unit DAA values in ``direction`` (``"discharge"`` or ``"charge"``)."""
    attr = {"discharge": "daa_discharge", "charge": "daa_charge"}[direction]
    return float(sum(getattr(u, attr) for u in units))


# roster files -----------------------------------------------------------

ROSTER_FIELDS = ["id", "feeder", "node", "phases", "p_kw", "e_kwh", "soc",
                 "soc_min", "soc_max", "eta_c", "eta_d"]
_FLOATS = {"p_kw", "e_kwh", "soc", "soc_min", "soc_max", "eta_c", "eta_d"}


def save_roster(units, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ROSTER_FIELDS)
        w.writeheader()
        for u in units:
            w.writerow({k: repr(getattr(u, k)) if k in _FLOATS else getattr(u, k)
                        for k in ROSTER_FIELDS})


def load_roster(path):
    units = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(ROSTER_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: roster missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                kw = {k: float(row[k]) if k in _FLOATS else row[k] for k in ROSTER_FIELDS}
                units.append(BessUnit(**kw))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return units

