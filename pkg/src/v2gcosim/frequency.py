"""Transmission-grid frequency model: swing dynamics plus a thermal plant with PFC.

State (all per-unit on the grid capacity):

    M dΔω/dt  = ΔP + P_m - D Δω
    T_g dx_g/dt = -Δω / R_g + lfc - x_g      (governor)
    T_t dP_m/dt = x_g - P_m                  (turbine)

Δω is the per-unit angular-frequency deviation; the frequency deviation in Hz
is ``Δω * f_nominal`` (equivalently the rad/s deviation divided by 2π).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels


class NumericalFault(RuntimeError):
    pass


class HorizonError(ValueError):
    pass


@dataclass(frozen=True)
class GridDynamicsConfig:
    inertia: float = 9.0  # M [s]
    damping: float = 2.0  # D [pu]
    s_grid: float = 8.3e9  # VA
    governor_droop: float = 0.05  # R_g [pu]; inf disables the governor
    governor_time: float = 0.2  # T_g [s]
    turbine_time: float = 5.0  # T_t [s]
    f_nominal: float = 50.0  # Hz

    def __post_init__(self):
        if not (self.inertia > 0 and self.governor_time > 0 and self.turbine_time > 0):
            raise ValueError("inertia and governor/turbine time constants must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if not self.governor_droop > 0:
            raise ValueError("governor droop must be positive (use inf to disable)")
        if not self.s_grid > 0:
            raise ValueError("grid capacity must be positive")

    @property
    def inv_droop(self) -> float:
        return 0.0 if math.isinf(self.governor_droop) else 1.0 / self.governor_droop


@dataclass(frozen=True)
class FrequencyState:
    dw: float = 0.0  # pu
    governor: float = 0.0  # pu
    turbine: float = 0.0  # pu, mechanical power deviation

    def df(self, f_nominal: float = 50.0) -> float:
        """Frequency deviation in Hz."""
        return self.dw * f_nominal


class PiecewiseLinear:
    """Time series evaluated by linear interpolation between knots."""

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("series needs matching non-empty 1-D time and value arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("series times must be strictly increasing")
        self.times = t
        self.values = v

    @classmethod
    def constant(cls, value: float, horizon: float) -> "PiecewiseLinear":
        return cls([0.0, horizon], [value, value])

    @classmethod
    def from_csv(cls, path: str | Path) -> "PiecewiseLinear":
        times, values = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    t, v = float(row[0]), float(row[1])
                except ValueError:
                    if not times:
                        continue  # header row
                    raise
                times.append(t)
                values.append(v)
        return cls(times, values)

    def covers(self, t0: float, t1: float) -> bool:
        return self.times[0] <= t0 + 1e-12 and self.times[-1] >= t1 - 1e-12

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < self.times[0] - 1e-9) or np.any(t_arr > self.times[-1] + 1e-9):
            raise HorizonError(
                f"time outside series range [{self.times[0]}, {self.times[-1]}] s"
            )
        out = np.interp(t_arr, self.times, self.values)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ExogenousSeries:
    load: PiecewiseLinear
    pv: PiecewiseLinear
    lfc: PiecewiseLinear
    edc: PiecewiseLinear

    def dp_exogenous(self, t):
        """Exogenous part of the net imbalance: scheduled generation + PV - load."""
        return self.edc(t) + self.pv(t) - self.load(t)


def net_imbalance(t: float, series: ExogenousSeries, ev_total: float) -> float:
    """Net supply-demand imbalance (pu); EV discharge counts as supply."""
    return series.edc(t) + series.pv(t) - series.load(t) + ev_total


def synthetic_series(
    horizon: float,
    seed: int,
    knot_interval: float = 1.0,
    pv_sigma: float = 0.006,
    pv_bound: float = 0.06,
    load_sigma: float = 0.003,
    load_bound: float = 0.03,
) -> ExogenousSeries:
    """Aperiodic PV and load deviations as seeded, reflected random walks.

    Values are deviations from the scheduled operating point in pu of the grid
    capacity; EDC and LFC are held at zero.
    """
    rng = np.random.default_rng(seed)
    n = int(math.ceil(horizon / knot_interval)) + 1
    times = np.arange(n) * knot_interval

    def walk(sigma: float, bound: float) -> np.ndarray:
        steps = rng.standard_normal(n - 1) * sigma
        out = np.empty(n)
        x = 0.0
        out[0] = x
        for i, s in enumerate(steps, start=1):
            x += s
            # reflect at the bounds
            if x > bound:
                x = 2 * bound - x
            elif x < -bound:
                x = -2 * bound - x
            out[i] = x
        return out

    pv = walk(pv_sigma, pv_bound)
    load = walk(load_sigma, load_bound)
    zero = PiecewiseLinear.constant(0.0, float(times[-1]))
    return ExogenousSeries(
        load=PiecewiseLinear(times, load),
        pv=PiecewiseLinear(times, pv),
        lfc=zero,
        edc=zero,
    )


def _three(value) -> tuple[float, float, float]:
    if isinstance(value, (int, float)):
        v = float(value)
        return v, v, v
    a, b, c = value
    return float(a), float(b), float(c)


def step_frequency(
    state: FrequencyState,
    net_imbalance: float | Sequence[float],
    cfg: GridDynamicsConfig,
    dt: float,
    lfc: float | Sequence[float] = 0.0,
) -> FrequencyState:
    """Advance the frequency model by one RK4 step of length ``dt``.

    ``net_imbalance`` and ``lfc`` are either constants over the step or
    ``(start, midpoint, end)`` samples.
    """
    if not 0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1] s, got {dt!r}")
    p0, p1, p2 = _three(net_imbalance)
    l0, l1, l2 = _three(lfc)
    dw, xg, pm = kernels.rk4_freq(
        state.dw, state.governor, state.turbine, p0, p1, p2, l0, l1, l2,
        cfg.inertia, cfg.damping, cfg.inv_droop, cfg.governor_time, cfg.turbine_time, dt,
    )
    if not (math.isfinite(dw) and math.isfinite(xg) and math.isfinite(pm)):
        raise NumericalFault(
            f"non-finite frequency state after step: dw={dw}, governor={xg}, turbine={pm}"
        )
    return FrequencyState(dw, xg, pm)


def simulate_frequency(
    cfg: GridDynamicsConfig,
    series: ExogenousSeries,
    horizon: float,
    dt: float,
    ev_total=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Open-loop run of the frequency model; returns ``(t, Δf [Hz])``.

    ``ev_total`` is an optional callable of time giving aggregate EV power (pu).
    """
    n = int(round(horizon / dt))
    t = np.arange(n + 1) * dt
    half = np.arange(2 * n + 1) * (0.5 * dt)
    dp = series.dp_exogenous(half)
    lfc = series.lfc(half)
    if ev_total is not None:
        dp = dp + np.array([ev_total(x) for x in half])
    out = np.empty(n + 1)
    state = FrequencyState()
    out[0] = state.df(cfg.f_nominal)
    for k in range(n):
        j = 2 * k
        state = step_frequency(state, (dp[j], dp[j + 1], dp[j + 2]), cfg, dt,
                               (lfc[j], lfc[j + 1], lfc[j + 2]))
        out[k + 1] = state.df(cfg.f_nominal)
    return t, out
