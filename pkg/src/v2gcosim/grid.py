"""Static descriptions of the feeder, its stations and loads, and per-unit bases.

All internal computation is per-unit on a single (s_base, v_base) pair.
Line constants are stored both as per-unit series impedance per km and as the
equivalent per-km admittance decomposition (G, B) used by the voltage ODE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence


class ConfigurationError(ValueError):
    """Invalid static configuration (bases, geometry, station layout)."""


@dataclass(frozen=True)
class PerUnitBase:
    s_base: float  # VA
    v_base: float  # V
    f_nominal: float = 50.0  # Hz
    z_base: float = field(init=False)

    def __post_init__(self):
        for name in ("s_base", "v_base", "f_nominal"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")
        object.__setattr__(self, "z_base", self.v_base * self.v_base / self.s_base)

    def _base_for(self, kind: str) -> float:
        if kind == "power":
            return self.s_base
        if kind == "voltage":
            return self.v_base
        if kind == "impedance":
            return self.z_base
        raise ConfigurationError(f"unknown per-unit kind {kind!r}")


def to_per_unit(value: float, base: PerUnitBase, kind: str) -> float:
    """Divide ``value`` by the base matching ``kind`` (power, voltage or impedance)."""
    return value / base._base_for(kind)


def from_per_unit(value: float, base: PerUnitBase, kind: str) -> float:
    return value * base._base_for(kind)


@dataclass(frozen=True)
class FeederSpec:
    """One straight-line feeder starting at the bank (x = 0) and ending at x = L.

    ``g_per_km`` and ``b_per_km`` are the admittance decomposition of the
    per-unit series impedance, so ``g_per_km / y_mag**2`` is the per-unit
    resistance per km and ``b_per_km / y_mag**2`` the per-unit reactance per km.
    """

    length_km: float
    r_per_km: float  # ohm/km
    x_per_km: float  # ohm/km
    base: PerUnitBase
    v_bank: float = 1.0  # pu
    r_pu_per_km: float = field(init=False)
    x_pu_per_km: float = field(init=False)
    g_per_km: float = field(init=False)
    b_per_km: float = field(init=False)
    y_mag: float = field(init=False)

    def __post_init__(self):
        if not self.length_km > 0:
            raise ConfigurationError(f"feeder length must be positive, got {self.length_km!r}")
        if not self.r_per_km > 0:
            raise ConfigurationError(f"feeder resistance must be positive, got {self.r_per_km!r}")
        if self.x_per_km < 0:
            raise ConfigurationError(f"feeder reactance must be non-negative, got {self.x_per_km!r}")
        if not self.v_bank > 0:
            raise ConfigurationError(f"bank voltage must be positive, got {self.v_bank!r}")
        r = to_per_unit(self.r_per_km, self.base, "impedance")
        x = to_per_unit(self.x_per_km, self.base, "impedance")
        den = r * r + x * x
        g = r / den
        b = x / den
        set_ = object.__setattr__
        set_(self, "r_pu_per_km", r)
        set_(self, "x_pu_per_km", x)
        set_(self, "g_per_km", g)
        set_(self, "b_per_km", b)
        set_(self, "y_mag", math.sqrt(g * g + b * b))

    @property
    def y2(self) -> float:
        """G² + B², computed from the stored components."""
        return self.g_per_km * self.g_per_km + self.b_per_km * self.b_per_km

    @property
    def g_over_y2(self) -> float:
        """Per-unit resistance per km, the coefficient of the linearised voltage gradient."""
        return self.g_per_km / self.y2

    @property
    def b_over_y2(self) -> float:
        return self.b_per_km / self.y2


def build_feeder(
    length_km: float,
    r_ohm_per_km: float,
    x_ohm_per_km: float,
    base: PerUnitBase,
    v_bank: float = 1.0,
) -> FeederSpec:
    return FeederSpec(length_km, r_ohm_per_km, x_ohm_per_km, base, v_bank)


@dataclass(frozen=True)
class StationSpec:
    index: int
    location_km: float
    ev_count: int
    p_per_ev_max: float  # W

    def __post_init__(self):
        if self.ev_count < 0:
            raise ConfigurationError(f"station {self.index}: negative EV count {self.ev_count}")
        if self.p_per_ev_max < 0:
            raise ConfigurationError(f"station {self.index}: negative per-EV power")

    @property
    def p_max(self) -> float:
        return self.ev_count * self.p_per_ev_max

    def with_count(self, ev_count: int) -> "StationSpec":
        return StationSpec(self.index, self.location_km, ev_count, self.p_per_ev_max)


@dataclass(frozen=True)
class LoadSpec:
    location_km: float
    p_load: float  # W, consumption positive
    q_load: float = 0.0  # var

    def __post_init__(self):
        if self.q_load != 0.0:
            raise ConfigurationError("reactive loads are not supported (unity power factor only)")


@dataclass(frozen=True)
class PointInjection:
    """Active power injected into the feeder at one point; positive = discharge."""

    location_km: float
    p: float  # pu


def validate_stations(stations: Sequence[StationSpec], feeder: FeederSpec) -> None:
    """Stations must lie strictly inside the feeder and be strictly ordered by location."""
    prev = None
    for st in stations:
        if not 0.0 < st.location_km < feeder.length_km:
            raise ConfigurationError(
                f"station {st.index} at {st.location_km} km lies outside (0, {feeder.length_km}) km"
            )
        if prev is not None and not st.location_km > prev.location_km:
            if st.location_km == prev.location_km:
                raise ConfigurationError(
                    f"stations {prev.index} and {st.index} share location {st.location_km} km"
                )
            raise ConfigurationError(f"station {st.index} is not ordered by location")
        prev = st


def validate_loads(loads: Sequence[LoadSpec], feeder: FeederSpec) -> None:
    for i, ld in enumerate(loads):
        if not 0.0 < ld.location_km <= feeder.length_km:
            raise ConfigurationError(
                f"load {i} at {ld.location_km} km lies outside (0, {feeder.length_km}] km"
            )


def load_injections(loads: Sequence[LoadSpec], base: PerUnitBase) -> list[PointInjection]:
    """Loads enter the voltage model as negative injections."""
    return [PointInjection(ld.location_km, -to_per_unit(ld.p_load, base, "power")) for ld in loads]


def station_injections(
    stations: Sequence[StationSpec], powers_w: Sequence[float], base: PerUnitBase
) -> list[PointInjection]:
    if len(stations) != len(powers_w):
        raise ConfigurationError("one power value per station is required")
    return [
        PointInjection(st.location_km, to_per_unit(p, base, "power"))
        for st, p in zip(stations, powers_w)
    ]
