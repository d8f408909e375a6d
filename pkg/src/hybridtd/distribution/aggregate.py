"""Lumped PCC equivalent of a feeder: totals only, network discarded."""
from dataclasses import dataclass

import numpy as np

from ..bess import BessUnit


@dataclass
class LumpedFeeder:
    name: str
    load_kva: complex
    pv_kw_rated: float
    bess: BessUnit | None
    pv_series_kw: np.ndarray | None = None


def equivalent_bess(units, name="aggregate"):
    """Single unit with summed ratings and energy-weighted SoC, limits and efficiencies."""
    units = list(units)
    if not units:
        return None
    e = np.array([u.e_kwh for u in units])
    w = e / e.sum()

    def wmean(attr):
        return float(np.dot(w, [getattr(u, attr) for u in units]))

    soc = min(max(wmean("soc"), wmean("soc_min")), wmean("soc_max"))
    return BessUnit(id=name, p_kw=float(sum(u.p_kw for u in units)), e_kwh=float(e.sum()),
                    soc=soc, soc_min=wmean("soc_min"), soc_max=wmean("soc_max"),
                    eta_c=wmean("eta_c"), eta_d=wmean("eta_d"),
                    daa_with_efficiency=units[0].daa_with_efficiency)


def aggregate_feeder(feeder, units=(), profiles=None):
    """Collapse a feeder to totals.

    ``units`` are the BESS units attached to the feeder (matched by id);
    with ``profiles`` (``{id: Profile}``) the PV output series are
    summed into ``pv_series_kw``.
    """
    attached = {b.unit for b in feeder.bess}
    mine = [u for u in units if u.id in attached]
    load = complex(sum(ld.kw for ld in feeder.loads), sum(ld.kvar for ld in feeder.loads))
    pv_rated = float(sum(p.kw_rated for p in feeder.pv))
    series = None
    if profiles is not None and feeder.pv:
        series = sum(p.kw_rated * np.asarray(profiles[p.profile].samples) for p in feeder.pv)
    return LumpedFeeder(feeder.name, load, pv_rated, equivalent_bess(mine, f"{feeder.name}.agg"),
                        series)
