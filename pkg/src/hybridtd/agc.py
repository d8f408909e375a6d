"""Area control error, ACE split between storage and generators, and the
two filtered PI regulation loops.

Sign conventions: tie deviations are export-positive, so a positive ACE
means the area over-generates and regulation must lower output. Both
loops integrate their share of the ACE; dispatch negates the loop output.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .bess import fleet_daa

log = logging.getLogger(__name__)


def compute_ace(beta, df_hz, dp_tie_mw):
    """ACE in MW: tie deviation plus bias-weighted frequency deviation."""
    return dp_tie_mw + beta * df_hz


def split_ace(ace, daa_b, aa_g, events=None):
    """Split an area ACE between the storage and conventional loops.

    The storage share is proportional to its availability; the
    conventional share is the remainder. The storage share is re-derived
    from the remainder so that ``ace_b + ace_g == ace`` holds exactly in
    floating point (one of the two subtractions is always exact).
    """
    if daa_b < 0 or aa_g < 0:
        raise ValueError("availabilities must be non-negative")
    total = daa_b + aa_g
    if total <= 0:
        if events is not None:
            events.append({"kind": "regulation_exhausted", "ace": ace})
        log.warning("regulation exhausted: no storage or generator availability")
        return 0.0, ace
    ace_b = ace * (daa_b / total)
    ace_g = ace - ace_b
    return ace - ace_g, ace_g


@dataclass
class FilterPi:
    """First-order low-pass followed by a PI with a clamped integrator."""

    tau: float
    kp: float
    ki: float
    lo: float = -math.inf
    hi: float = math.inf
    filter_state: float = 0.0
    integrator: float = 0.0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    def reset(self):
        self.filter_state = 0.0
        self.integrator = 0.0


def filter_pi_step(block, value, dt, lo=None, hi=None):
    """Advance ``block`` one sample of length ``dt``; returns the command.

    The low-pass uses the exact zero-order-hold discretization, stable
    for any ``dt / tau``; ``tau = 0`` bypasses it. The integrator is held
    inside the output limits, so the output leaves a limit on the first
    sample after the filtered error changes sign.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if lo is not None:
        block.lo = lo
    if hi is not None:
        block.hi = hi
    if block.tau > 0:
        block.filter_state += -math.expm1(-dt / block.tau) * (value - block.filter_state)
    else:
        block.filter_state = value
    err = block.filter_state
    block.integrator = min(max(block.integrator + block.ki * err * dt, block.lo), block.hi)
    return min(max(block.kp * err + block.integrator, block.lo), block.hi)


def command_direction(value):
    """``"up"`` when more generation is needed (negative ACE), else ``"down"``."""
    return "up" if value < 0 else "down"


def conventional_availability(generators, direction="up"):
    """Sum of regulation reserve of AGC units in the commanded direction, MW."""
    attr = "reserve_up_mw" if direction == "up" else "reserve_down_mw"
    return float(sum(getattr(g, attr) for g in generators if g.agc))


def dispatch_conventional(command, participation, reserve_up, reserve_down, events=None):
    """Per-generator MW setpoints ``-command * factor``, clamped to reserve.

    Energy a clamped unit cannot take is redistributed once to the
    unclamped units in proportion to their factors.
    """
    ids = list(participation)
    pf = np.array([participation[g] for g in ids], float)
    up = np.array([reserve_up[g] for g in ids], float)
    down = np.array([reserve_down[g] for g in ids], float)
    want = -command * pf
    got = np.clip(want, -down, up)
    rest = float(np.sum(want - got))
    if rest != 0.0:
        free = got == want
        if free.any() and pf[free].sum() > 0:
            extra = np.zeros_like(got)
            extra[free] = rest * pf[free] / pf[free].sum()
            got = np.clip(got + extra, -down, up)
        shortfall = -command - float(np.sum(got))
        if abs(shortfall) > 1e-9 * max(1.0, abs(command)):
            if events is not None:
                events.append({"kind": "generators_saturated", "shortfall_mw": shortfall})
            log.warning("conventional AGC saturated, %.3f MW undelivered", shortfall)
    return dict(zip(ids, got.tolist()))


def dispatch_bess(command_kw, units, events=None):
    """Per-unit kW setpoints proportional to each unit's DAA in the commanded direction."""
    if command_kw == 0:
        return {u.id: 0.0 for u in units}
    direction = "discharge" if command_kw < 0 else "charge"
    daa = np.array([u.daa_discharge if direction == "discharge" else u.daa_charge for u in units])
    total = float(daa.sum())
    if total <= 0:
        if events is not None:
            events.append({"kind": "bess_exhausted", "command_kw": command_kw})
        log.warning("BESS fleet exhausted in %s direction", direction)
        return {u.id: 0.0 for u in units}
    cmd = np.clip(-command_kw * daa / total, -daa, daa)
    return dict(zip([u.id for u in units], cmd.tolist()))


def dispatch_equal_share(command_kw, units):
    """Aggregator-style allocation: the lumped command split evenly by count."""
    if not units:
        return {}
    share = -command_kw / len(units)
    return {u.id: share for u in units}


@dataclass
class DispatchRecord:
    area: int
    t: float
    df_hz: float
    dp_tie_mw: float
    ace: float
    ace_b: float
    ace_g: float
    daa_b_mw: float
    aa_g_mw: float
    cmd_b_mw: float
    cmd_g_mw: float
    gen_setpoints: dict = field(default_factory=dict)
    bess_setpoints: dict = field(default_factory=dict)
    events: list = field(default_factory=list)


@dataclass
class AreaControl:
    """Per-area regulation state: bias, both loops and participation factors."""

    area: int
    beta: float
    conventional: FilterPi
    storage: FilterPi
    participation: dict
    interval: float = 4.0
    ace: float = 0.0
    ace_b: float = 0.0
    ace_g: float = 0.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"area {self.area}: beta must be positive")
        if self.participation:
            total = sum(self.participation.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"area {self.area}: participation factors sum to {total}, not 1")

    def step(self, t, df_hz, dp_tie_mw, generators, units, aggregate=None):
        """One AGC interval: ACE, split, both loops and dispatch.

        ``generators`` are this area's AGC units; ``units`` its storage.
        With ``aggregate`` (a lumped unit standing in for ``units``) the
        storage availability comes from the lumped model and its command
        is shared equally across units.
        """
        events = []
        ace = compute_ace(self.beta, df_hz, dp_tie_mw)
        direction = command_direction(ace)
        aa_g = conventional_availability(generators, direction)
        fleet = [aggregate] if aggregate is not None else units
        daa_b = fleet_daa(fleet, "discharge" if direction == "up" else "charge") / 1000.0
        ace_b, ace_g = split_ace(ace, daa_b, aa_g, events)

        up = conventional_availability(generators, "up")
        down = conventional_availability(generators, "down")
        cmd_g = filter_pi_step(self.conventional, ace_g, self.interval, lo=-up, hi=down)
        dis = fleet_daa(fleet, "discharge") / 1000.0
        chg = fleet_daa(fleet, "charge") / 1000.0
        cmd_b = filter_pi_step(self.storage, ace_b, self.interval, lo=-dis, hi=chg)

        gen_sp = dispatch_conventional(
            cmd_g, self.participation,
            {g.id: g.reserve_up_mw for g in generators},
            {g.id: g.reserve_down_mw for g in generators}, events) if self.participation else {}
        if aggregate is not None:
            bess_sp = dispatch_equal_share(cmd_b * 1000.0, units)
        else:
            bess_sp = dispatch_bess(cmd_b * 1000.0, units, events) if units else {}
        self.ace, self.ace_b, self.ace_g = ace, ace_b, ace_g
        return DispatchRecord(self.area, t, df_hz, dp_tie_mw, ace, ace_b, ace_g, daa_b, aa_g,
                              cmd_b, cmd_g, gen_sp, bess_sp, events)
