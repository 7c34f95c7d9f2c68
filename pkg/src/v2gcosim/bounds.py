"""DSO-side bound synthesis: one uniform scaling factor per mode for all stations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .grid import FeederSpec, StationSpec, to_per_unit
from .voltage import end_deviation

DEFAULT_UPDATE_PERIOD = 900.0  # s


@dataclass(frozen=True)
class VoltageLimits:
    dv_cha_limit: float  # pu
    dv_discha_limit: float  # pu

    def __post_init__(self):
        if not (self.dv_cha_limit > 0 and self.dv_discha_limit > 0):
            raise ValueError("voltage deviation limits must be positive")


@dataclass(frozen=True)
class StationCaps:
    """Caps seen by one station controller, in watts (both magnitudes >= 0)."""

    charge: float
    discharge: float


@dataclass(frozen=True)
class BoundSet:
    alpha_cha: float
    alpha_discha: float
    p_max: tuple  # W per station, at the time of synthesis
    s_base: float
    valid_from: float = 0.0
    valid_until: float = float("inf")
    dv_full: float = 0.0  # pu, predicted end deviation at full station power

    @property
    def charge_caps(self) -> tuple:
        """Charging bounds -alpha_cha * P_max per station (pu, non-positive)."""
        return tuple(-self.alpha_cha * p / self.s_base for p in self.p_max)

    @property
    def discharge_caps(self) -> tuple:
        return tuple(self.alpha_discha * p / self.s_base for p in self.p_max)

    def station_caps(self, i: int) -> StationCaps:
        p = self.p_max[i]
        return StationCaps(self.alpha_cha * p, self.alpha_discha * p)

    def caps_watts(self) -> list[StationCaps]:
        return [self.station_caps(i) for i in range(len(self.p_max))]


def compute_alpha(dv_l: float, dv_limit: float) -> float:
    """Uniform scaling factor that brings the end deviation down to the limit."""
    if not dv_limit > 0:
        raise ValueError(f"dv_limit must be positive, got {dv_limit!r}")
    if dv_l < 0:
        raise ValueError(f"dv_l must be non-negative, got {dv_l!r}")
    if dv_l <= dv_limit:
        return 1.0
    return dv_limit / dv_l


def synthesize_bounds(
    feeder: FeederSpec,
    stations: Sequence[StationSpec],
    limits: VoltageLimits,
    now: float = 0.0,
    period: float = DEFAULT_UPDATE_PERIOD,
    force_full: bool = False,
) -> BoundSet:
    """Evaluate the full-power end deviation once and derive both modes' alphas.

    ``force_full`` pins both alphas at 1 (stations ignore the voltage limits).
    """
    base = feeder.base
    p_full = [to_per_unit(st.p_max, base, "power") for st in stations]
    dv = end_deviation(feeder, stations, p_full) if stations else 0.0
    if force_full:
        a_cha = a_dis = 1.0
    else:
        a_cha = compute_alpha(dv, limits.dv_cha_limit)
        a_dis = compute_alpha(dv, limits.dv_discha_limit)
    return BoundSet(
        alpha_cha=a_cha,
        alpha_discha=a_dis,
        p_max=tuple(float(st.p_max) for st in stations),
        s_base=base.s_base,
        valid_from=now,
        valid_until=now + period,
        dv_full=dv,
    )
