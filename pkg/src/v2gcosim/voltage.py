"""Feeder voltage profile: nonlinear ODE boundary-value solver and its oracles.

With unity-power-factor point sources ``P_i`` at ``xi_i`` and the line flow
``f = v**2 * dtheta/dx``, the voltage ODE reduces between sources to::

    v' = w,    w' = f**2 / v**3,    f' = 0

and across a source to the jumps ``[w] = -(G/Y²) P / v`` and ``[f] = -(B/Y²) P``.
Boundary conditions are ``v(0) = v_bank`` at the bank and ``w(L) = f(L) = 0`` at
the non-loading terminal. The problem is solved by shooting backward from the
terminal on the single unknown ``v(L)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .grid import FeederSpec, PointInjection, StationSpec


class VoltageSolverError(RuntimeError):
    pass


class InfeasibleLoadingError(VoltageSolverError):
    """No steady voltage profile exists (voltage collapse)."""


class NonConvergenceError(VoltageSolverError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e} pu)")
        self.residual = residual


class ModeError(ValueError):
    """Station powers mix charging and discharging."""


@dataclass(frozen=True)
class SolverConfig:
    shoot_tol: float = 1e-9
    max_newton_iters: int = 50
    segment_step: float = 1e-3  # km

    def __post_init__(self):
        if not self.shoot_tol > 0:
            raise ValueError("shoot_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if not self.segment_step > 0:
            raise ValueError("segment_step must be positive")


@dataclass(frozen=True)
class VoltageProfile:
    x: np.ndarray  # km, ascending
    v: np.ndarray  # pu
    theta: np.ndarray  # rad, theta(0) = 0
    w: np.ndarray  # pu/km; downstream limit at source points
    f: np.ndarray  # pu; line flow v**2 dtheta/dx
    source_x: tuple = ()
    source_p: tuple = ()
    iterations: int = 0
    residual: float = 0.0
    v_bank: float = 1.0
    length_km: float = field(default=0.0)

    @property
    def v_end(self) -> float:
        return float(self.v[-1])

    def at(self, x: float) -> float:
        """Voltage amplitude at ``x`` by linear interpolation between samples."""
        return float(np.interp(x, self.x, self.v))


def _merge(feeder: FeederSpec, injections: Iterable[PointInjection]):
    """Validate and merge injections; return locations (descending) and powers."""
    merged: dict[float, float] = {}
    for inj in injections:
        if not 0.0 < inj.location_km <= feeder.length_km:
            raise ValueError(
                f"injection at {inj.location_km} km outside (0, {feeder.length_km}] km"
            )
        merged[inj.location_km] = merged.get(inj.location_km, 0.0) + inj.p
    pos = sorted(merged, reverse=True)
    return pos, [merged[x] for x in pos]


def _shoot_end_voltage(feeder: FeederSpec, pos, pw, cfg: SolverConfig, guess: float | None):
    vb = feeder.v_bank
    gy, by, length = feeder.g_over_y2, feeder.b_over_y2, feeder.length_km
    if guess is None or not guess > 0:
        # linear prediction of the end voltage
        guess = vb + sum(gy * p * x for x, p in zip(pos, pw))
        if guess <= 0.2 * vb:
            guess = 0.5 * vb
    lo, hi = 0.0, math.inf
    lo_from_nose = False
    ever_negative = False
    v_end = guess
    r = math.inf
    for it in range(1, cfg.max_newton_iters + 1):
        v0, s, status = kernels.shoot(pos, pw, gy, by, length, v_end, cfg.segment_step)
        if status != kernels.OK or not s > 0.0:
            # below the nose of the v(0)-v(L) curve: the physical root lies higher
            lo = max(lo, v_end)
            lo_from_nose = True
            v_end = 0.5 * (lo + hi) if math.isfinite(hi) else lo + vb
        else:
            r = v0 - vb
            if abs(r) <= cfg.shoot_tol:
                return v_end, it, r
            if r > 0.0:
                hi = min(hi, v_end)
            else:
                lo = max(lo, v_end)
                ever_negative = True
            nxt = v_end - r / s
            if not lo < nxt < hi:
                nxt = 0.5 * (lo + hi)
            v_end = nxt
        if math.isfinite(hi) and hi - lo <= 1e-13 * hi:
            break
    if lo_from_nose and not ever_negative:
        raise InfeasibleLoadingError(
            f"no steady voltage profile: bank voltage {vb} pu is below the collapse point"
        )
    raise NonConvergenceError("shooting did not converge", r)


def end_voltage(
    feeder: FeederSpec,
    injections: Sequence[PointInjection],
    cfg: SolverConfig = SolverConfig(),
    guess: float | None = None,
) -> float:
    """v(L) from the full nonlinear model, without building the profile."""
    pos, pw = _merge(feeder, injections)
    return _shoot_end_voltage(feeder, pos, pw, cfg, guess)[0]


def solve_bvp(
    feeder: FeederSpec,
    injections: Sequence[PointInjection],
    cfg: SolverConfig = SolverConfig(),
    guess: float | None = None,
) -> VoltageProfile:
    """Solve the feeder voltage boundary-value problem.

    Raises
    ------
    InfeasibleLoadingError
        When the loading exceeds the collapse point of the feeder.
    NonConvergenceError
        When the shooting iteration does not meet ``cfg.shoot_tol``.
    """
    pos, pw = _merge(feeder, injections)
    v_end, iters, res = _shoot_end_voltage(feeder, pos, pw, cfg, guess)
    xs, vs, ts, ws, fs, status = kernels.shoot_profile(
        pos, pw, feeder.g_over_y2, feeder.b_over_y2, feeder.length_km, v_end, cfg.segment_step
    )
    if status != kernels.OK:
        raise InfeasibleLoadingError("voltage collapsed while sampling the converged profile")
    x = np.asarray(xs, dtype=float)[::-1].copy()
    theta = np.asarray(ts, dtype=float)[::-1]
    return VoltageProfile(
        x=x,
        v=np.asarray(vs, dtype=float)[::-1].copy(),
        theta=(theta - theta[0]).copy(),
        w=np.asarray(ws, dtype=float)[::-1].copy(),
        f=np.asarray(fs, dtype=float)[::-1].copy(),
        source_x=tuple(reversed(pos)),
        source_p=tuple(reversed(pw)),
        iterations=iters,
        residual=res,
        v_bank=feeder.v_bank,
        length_km=feeder.length_km,
    )


def collocation_residual(profile: VoltageProfile, points_per_segment: int = 100) -> float:
    """Max residual of the voltage ODE at interior points of every source-free segment.

    Derivatives are taken by central differences of the sampled profile, so
    this check is independent of the integrator's internal stages.
    """
    cuts = [0.0, *profile.source_x]
    if cuts[-1] < profile.length_km:
        cuts.append(profile.length_km)
    worst = 0.0
    x = profile.x
    for a, b in zip(cuts[:-1], cuts[1:]):
        idx = np.nonzero((x > a) & (x < b))[0]
        if idx.size < 3:
            continue
        inner = idx[1:-1]
        pick = inner[np.linspace(0, inner.size - 1, min(points_per_segment, inner.size)).astype(int)]
        for i in pick:
            h1 = x[i] - x[i - 1]
            h2 = x[i + 1] - x[i]
            v, th = profile.v, profile.theta
            d2v = 2.0 * (h1 * v[i + 1] - (h1 + h2) * v[i] + h2 * v[i - 1]) / (h1 * h2 * (h1 + h2))
            dth = (th[i + 1] - th[i - 1]) / (h1 + h2)
            flow_l = (0.5 * (v[i - 1] + v[i])) ** 2 * (th[i] - th[i - 1]) / h1
            flow_r = (0.5 * (v[i] + v[i + 1])) ** 2 * (th[i + 1] - th[i]) / h2
            r1 = d2v - v[i] * dth * dth
            r2 = (flow_r - flow_l) / (0.5 * (h1 + h2))
            worst = max(worst, abs(r1), abs(r2))
    return worst


def approx_gradient(feeder: FeederSpec, injections: Sequence[PointInjection], x: float) -> float:
    """Linearised voltage gradient: sum of downstream powers times G/Y²."""
    if not 0.0 <= x <= feeder.length_km:
        raise ValueError(f"x = {x} km outside [0, {feeder.length_km}] km")
    total = 0.0
    for inj in injections:
        if x < inj.location_km:
            total += inj.p
    return total * feeder.g_over_y2


def end_deviation(
    feeder: FeederSpec, stations: Sequence[StationSpec], station_powers: Sequence[float]
) -> float:
    """Linearised end-of-feeder voltage deviation caused by station powers (pu).

    All powers must share a sign (all charging or all discharging).
    """
    if len(stations) != len(station_powers):
        raise ValueError("one power value per station is required")
    if any(p > 0 for p in station_powers) and any(p < 0 for p in station_powers):
        raise ModeError("end deviation is defined for all-charging or all-discharging powers")
    total = 0.0
    for st, p in zip(stations, station_powers):
        total += abs(p) * st.location_km
    return feeder.g_over_y2 * total


def lumped_oracle(
    feeder: FeederSpec,
    injections: Sequence[PointInjection],
    tol: float = 1e-10,
    max_iter: int = 20000,
    damping: float = 0.8,
) -> float:
    """End voltage from an exact ladder power flow (independent of the ODE path).

    Buses sit at the injection points, joined by series-impedance segments of the
    line; the sweep iterates complex bus voltages with constant-power injections.
    """
    merged: dict[float, float] = {}
    for inj in injections:
        if not 0.0 < inj.location_km <= feeder.length_km:
            raise ValueError(f"injection at {inj.location_km} km outside the feeder")
        merged[inj.location_km] = merged.get(inj.location_km, 0.0) + inj.p
    if len(merged) > 32:
        raise ValueError("lumped oracle supports at most 32 injection points")
    if not merged:
        return feeder.v_bank
    xs = sorted(merged)
    s_inj = [complex(merged[x], 0.0) for x in xs]
    z_km = complex(feeder.r_pu_per_km, feeder.x_pu_per_km)
    z = [z_km * (b - a) for a, b in zip([0.0, *xs[:-1]], xs)]
    n = len(xs)
    volts = [complex(feeder.v_bank, 0.0)] * n
    for _ in range(max_iter):
        currents = [(s / vk).conjugate() for s, vk in zip(s_inj, volts)]
        branch = [0j] * n
        acc = 0j
        for k in range(n - 1, -1, -1):
            acc -= currents[k]
            branch[k] = acc
        new = []
        prev = complex(feeder.v_bank, 0.0)
        for k in range(n):
            prev = prev - z[k] * branch[k]
            new.append(prev)
        step = max(abs(a - b) for a, b in zip(new, volts))
        volts = [vk + damping * (nk - vk) for vk, nk in zip(volts, new)]
        if not all(cmath.isfinite(vk) and abs(vk) > 1e-3 for vk in volts):
            raise InfeasibleLoadingError("ladder power flow diverged")
        if step < tol:
            return abs(volts[-1])
    raise InfeasibleLoadingError("ladder power flow did not converge")


def random_injections(
    feeder: FeederSpec, n: int, rng: np.random.Generator, total_max: float = 0.5
) -> list[PointInjection]:
    """``n`` random injections of mixed sign with total |P| drawn up to ``total_max`` pu."""
    if n < 1:
        raise ValueError("need at least one injection")
    xs = rng.uniform(0.02, 1.0, n) * feeder.length_km
    raw = rng.uniform(-1.0, 1.0, n)
    raw *= rng.uniform(0.05, 1.0) * total_max / np.sum(np.abs(raw))
    return [PointInjection(float(x), float(p)) for x, p in zip(xs, raw)]
