"""Station-side V2G control: the voltage-bounded droop law and the PCS conversion lag."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

from . import kernels
from .bounds import BoundSet, StationCaps
from .grid import StationSpec

DEFAULT_DF1 = 0.2  # Hz


@dataclass(frozen=True)
class DroopConfig:
    df1: float = DEFAULT_DF1  # Hz

    def __post_init__(self):
        if not self.df1 > 0:
            raise ValueError(f"df1 must be positive, got {self.df1!r}")

    def slopes(self, caps: StationCaps) -> tuple[float, float]:
        """(K_cha, K_discha) in W/Hz; both non-positive."""
        return -caps.charge / self.df1, -caps.discharge / self.df1


def droop_power(df: float, caps: StationCaps, cfg: DroopConfig) -> float:
    """Station power reference (W, discharge positive) from the local Δf [Hz].

    Saturates at ``-caps.charge`` for Δf >= df1 and at ``+caps.discharge`` for
    Δf < -df1, linear in between. Uses nothing but the station's own caps.
    """
    return kernels.droop(float(df), caps.charge, caps.discharge, cfg.df1)


def capability(bounds: BoundSet, stations: Sequence[StationSpec], df1: float) -> tuple[float, float]:
    """Feeder reserve per unit frequency deviation, (charging, discharging) in W/Hz."""
    if not df1 > 0:
        raise ValueError("df1 must be positive")
    total = sum(st.p_max for st in stations)
    return -(bounds.alpha_cha / df1) * total, (bounds.alpha_discha / df1) * total


def delay_samples(delay: float, dt: float) -> int:
    """Pure delay rounded to a whole number of engine steps."""
    return int(round(delay / dt))


def lag_keep(lag: float, dt: float) -> float:
    """Fraction of the lag state kept per step (exact for a held input)."""
    return 0.0 if lag == 0 else math.exp(-dt / lag)


class ConversionDynamics:
    """Delay ``delay`` followed by a first-order lag ``lag``: AS reference -> PCS output.

    The reference is treated as held between engine ticks, so the lag update is
    the exact discretisation of the continuous block. With ``lag == 0`` the
    delayed reference passes through unchanged.
    """

    def __init__(self, delay: float, lag: float, dt: float):
        if delay < 0 or lag < 0:
            raise ValueError("delay and lag must be non-negative")
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.delay, self.lag, self.dt = delay, lag, dt
        self.n_delay = delay_samples(delay, dt)
        self.keep = lag_keep(lag, dt)
        self._line = deque([0.0] * self.n_delay)
        self._prev = 0.0
        self.output = 0.0

    def step(self, reference: float) -> float:
        if self.n_delay:
            delayed = self._line.popleft()
            self._line.append(reference)
        else:
            delayed = reference
        if self.lag == 0:
            y = delayed
        else:
            y = self.keep * self.output + (1.0 - self.keep) * self._prev
            self._prev = delayed
        self.output = y
        return y


def convert(reference: float, dyn: ConversionDynamics, dt: float) -> float:
    """Feed one reference sample through ``dyn``; returns the realised power."""
    if abs(dt - dyn.dt) > 1e-12:
        raise ValueError("dt does not match the conversion dynamics step")
    return dyn.step(reference)
