"""Closed-loop co-simulation: station droop controllers coupling grid frequency to feeder voltage.

Per tick: sample Δf, compute every station's droop reference against its
current caps, pass it through the conversion dynamics, scale the feeder
aggregate to grid per-unit and step the frequency model. Bounds are
re-synthesised every ``bound_update_period`` from the EV-count schedule and
the feeder voltage is evaluated quasi-statically every ``voltage_eval_period``.
A single feeder is simulated and replicated ``replication`` times.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .bounds import BoundSet, VoltageLimits, synthesize_bounds
from .control import DroopConfig, delay_samples, lag_keep
from .frequency import ExogenousSeries, GridDynamicsConfig, PiecewiseLinear, synthetic_series
from .grid import (
    FeederSpec,
    LoadSpec,
    PerUnitBase,
    StationSpec,
    load_injections,
    station_injections,
)
from .voltage import SolverConfig, VoltageProfile, VoltageSolverError, end_voltage, solve_bvp

log = logging.getLogger(__name__)

MODES = ("multi_objective", "single_objective", "no_ev")
SWEEP_PARAMETERS = ("df1", "dv_cha_limit", "loading_fraction")


class ScenarioValidationError(ValueError):
    pass


@dataclass(frozen=True)
class StationSchedule:
    """A station with a piecewise-constant EV-count schedule ``((t0, n0), (t1, n1), ...)``."""

    index: int
    location_km: float
    p_per_ev: float  # W
    schedule: tuple

    def count_at(self, t: float) -> int:
        count = self.schedule[0][1]
        for t_i, n_i in self.schedule:
            if t_i <= t + 1e-9:
                count = n_i
            else:
                break
        return int(count)

    def spec_at(self, t: float) -> StationSpec:
        return StationSpec(self.index, self.location_km, self.count_at(t), self.p_per_ev)


@dataclass(frozen=True)
class SeriesSpec:
    """Where the exogenous grid series come from.

    Each of ``load``, ``pv``, ``lfc``, ``edc`` is ``None`` (synthetic for load/PV,
    zero for LFC/EDC), a CSV path, or an inline tuple of ``(t, value)`` pairs.
    """

    load: object = None
    pv: object = None
    lfc: object = None
    edc: object = None
    knot_interval: float = 1.0
    pv_sigma: float = 0.006
    pv_bound: float = 0.06
    load_sigma: float = 0.003
    load_bound: float = 0.03

    def materialize(self, horizon: float, seed: int) -> ExogenousSeries:
        synth = synthetic_series(
            horizon, seed, self.knot_interval,
            self.pv_sigma, self.pv_bound, self.load_sigma, self.load_bound,
        )

        def pick(src, default):
            if src is None:
                return default
            if isinstance(src, str):
                return PiecewiseLinear.from_csv(src)
            ts, vs = zip(*src)
            return PiecewiseLinear(ts, vs)

        out = ExogenousSeries(
            load=pick(self.load, synth.load),
            pv=pick(self.pv, synth.pv),
            lfc=pick(self.lfc, synth.lfc),
            edc=pick(self.edc, synth.edc),
        )
        for name in ("load", "pv", "lfc", "edc"):
            if not getattr(out, name).covers(0.0, horizon):
                raise ScenarioValidationError(f"series {name} does not cover [0, {horizon}] s")
        return out


@dataclass(frozen=True)
class Scenario:
    name: str
    base: PerUnitBase
    grid: GridDynamicsConfig
    feeder: FeederSpec
    stations: tuple  # StationSchedule
    loads: tuple  # LoadSpec
    limits: VoltageLimits
    droop: DroopConfig = DroopConfig()
    delay: float = 0.0  # s
    lag: float = 0.0  # s
    horizon: float = 3600.0
    dt: float = 0.01
    bound_update_period: float = 900.0
    voltage_eval_period: float = 1.0
    trace_period: float = 0.0  # 0 -> every tick
    replication: int = 1
    mode: str = "multi_objective"
    seed: int = 0
    series: SeriesSpec = SeriesSpec()
    solver: SolverConfig = SolverConfig()

    def ticks(self, period: float) -> int:
        return int(round(period / self.dt))

    def validate(self) -> None:
        if not self.horizon > 0:
            raise ScenarioValidationError("horizon must be positive")
        if not 0 < self.dt <= 0.1:
            raise ScenarioValidationError("dt must lie in (0, 0.1] s")
        if self.replication < 1:
            raise ScenarioValidationError("replication must be >= 1")
        if self.mode not in MODES:
            raise ScenarioValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        periods = {
            "horizon": self.horizon,
            "bound_update_period": self.bound_update_period,
            "voltage_eval_period": self.voltage_eval_period,
        }
        if self.trace_period:
            periods["trace_period"] = self.trace_period
        for key, value in periods.items():
            n = value / self.dt
            if not value > 0 or abs(n - round(n)) > 1e-6 * max(1.0, n):
                raise ScenarioValidationError(f"{key} = {value} s is not a multiple of dt = {self.dt} s")
        prev = None
        for st in self.stations:
            if not 0.0 < st.location_km < self.feeder.length_km:
                raise ScenarioValidationError(
                    f"station {st.index} at {st.location_km} km lies outside (0, {self.feeder.length_km}) km"
                )
            if prev is not None and not st.location_km > prev:
                raise ScenarioValidationError(f"station {st.index} is not strictly ordered by location")
            prev = st.location_km
            if not st.schedule or st.schedule[0][0] > 0:
                raise ScenarioValidationError(f"station {st.index}: schedule must start at t = 0")
            if any(n < 0 for _, n in st.schedule):
                raise ScenarioValidationError(f"station {st.index}: negative EV count")
        for i, ld in enumerate(self.loads):
            if not 0.0 < ld.location_km <= self.feeder.length_km:
                raise ScenarioValidationError(f"load {i} at {ld.location_km} km lies outside the feeder")

    def stations_at(self, t: float) -> list[StationSpec]:
        return [s.spec_at(t) for s in self.stations]


@dataclass
class ScenarioTrace:
    scenario: Scenario
    t: np.ndarray
    df: np.ndarray  # Hz
    dp_load: np.ndarray  # pu (grid)
    dp_pv: np.ndarray
    dp_edc: np.ndarray
    dp_lfc: np.ndarray
    turbine: np.ndarray  # pu, thermal plant output deviation
    ev_w: np.ndarray  # W, one feeder
    ev_pu: np.ndarray  # pu (grid), all replicated feeders
    p_ref: np.ndarray  # W, ticks x stations
    p_out: np.ndarray
    v_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    v_end: np.ndarray = field(default_factory=lambda: np.empty(0))  # pu
    v_dev: np.ndarray = field(default_factory=lambda: np.empty(0))  # pu, drop caused by EVs
    v_ref_end: float = 1.0  # pu, loads only
    bounds: list = field(default_factory=list)  # (t, counts, BoundSet)
    profiles: dict = field(default_factory=dict)
    fault: str | None = None
    fault_time: float | None = None

    @property
    def v_base(self) -> float:
        return self.scenario.base.v_base


def _caps_for(bounds: BoundSet, mode: str):
    if mode == "no_ev":
        n = len(bounds.p_max)
        return np.zeros(n), np.zeros(n)
    cha = np.array([bounds.alpha_cha * p for p in bounds.p_max], dtype=float)
    dis = np.array([bounds.alpha_discha * p for p in bounds.p_max], dtype=float)
    return cha, dis


def run(scenario: Scenario, profile_times: Sequence[float] = ()) -> ScenarioTrace:
    """Simulate ``scenario``; faults truncate the trace and are recorded, not raised."""
    scenario.validate()
    sc = scenario
    base, feeder = sc.base, sc.feeder
    n_ticks = sc.ticks(sc.horizon)
    n_bound = sc.ticks(sc.bound_update_period)
    n_volt = sc.ticks(sc.voltage_eval_period)
    n_sta = len(sc.stations)

    series = sc.series.materialize(sc.horizon, sc.seed)
    half = np.arange(2 * n_ticks + 1) * (0.5 * sc.dt)
    exo_dp = np.ascontiguousarray(series.dp_exogenous(half), dtype=float)
    exo_lfc = np.ascontiguousarray(series.lfc(half), dtype=float)
    t = np.arange(n_ticks) * sc.dt
    ticks = half[: 2 * n_ticks : 2]

    g = sc.grid
    keep = lag_keep(sc.lag, sc.dt)
    params = np.array([
        g.inertia, g.damping, g.inv_droop, g.governor_time, g.turbine_time, sc.dt,
        g.f_nominal, sc.droop.df1, keep, 1.0 if sc.lag == 0 else 0.0,
        float(sc.replication), g.s_grid,
    ], dtype=float)
    fstate = np.zeros(3)
    n_delay = delay_samples(sc.delay, sc.dt)
    conv_buf = np.zeros((n_sta, n_delay))
    conv_head = np.zeros(1, dtype=np.int64)
    conv_prev = np.zeros(n_sta)
    conv_y = np.zeros(n_sta)

    out_df = np.zeros(n_ticks)
    out_ref = np.zeros((n_ticks, n_sta))
    out_out = np.zeros((n_ticks, n_sta))
    out_ev_w = np.zeros(n_ticks)
    out_ev_pu = np.zeros(n_ticks)
    out_pm = np.zeros(n_ticks)

    v_t, v_end, v_dev = [], [], []
    bound_log = []
    profiles = {}
    want_profiles = {int(round(x / sc.dt)) for x in profile_times}
    caps_cha = np.zeros(n_sta)
    caps_dis = np.zeros(n_sta)
    fault = None
    fault_time = None
    done = n_ticks

    loads_inj = load_injections(sc.loads, base)
    try:
        v_ref = end_voltage(feeder, loads_inj, sc.solver)
    except VoltageSolverError as exc:
        v_ref = float("nan")
        done = 0
        fault_time = 0.0
        fault = f"voltage solver fault at t = 0 s (loads only): {exc}"
    v_guess = v_ref

    k = 0 if fault is None else n_ticks
    while k < n_ticks:
        if k % n_bound == 0:
            now = k * sc.dt
            specs = sc.stations_at(now)
            bset = synthesize_bounds(
                feeder, specs, sc.limits, now, sc.bound_update_period,
                force_full=(sc.mode == "single_objective"),
            )
            caps_cha, caps_dis = _caps_for(bset, sc.mode)
            bound_log.append((now, tuple(s.ev_count for s in specs), bset))
        next_bound = (k // n_bound + 1) * n_bound
        next_volt = k if k % n_volt == 0 else (k // n_volt + 1) * n_volt
        stop = min(next_bound, next_volt + 1, n_ticks)
        status, reached = kernels.advance(
            k, stop, fstate, params, exo_dp, exo_lfc, caps_cha, caps_dis,
            conv_buf, conv_head, conv_prev, conv_y,
            out_df, out_ref, out_out, out_ev_w, out_ev_pu, out_pm,
        )
        if status != kernels.OK:
            done = reached
            fault_time = (reached - 1) * sc.dt
            fault = f"numerical fault: non-finite frequency state at t = {fault_time:.6g} s"
            break
        last = stop - 1
        if last % n_volt == 0:
            inj = loads_inj + station_injections(sc.stations_at(last * sc.dt), out_out[last], base)
            try:
                if last in want_profiles:
                    prof = solve_bvp(feeder, inj, sc.solver, guess=v_guess)
                    profiles[last * sc.dt] = prof
                    ve = prof.v_end
                else:
                    ve = end_voltage(feeder, inj, sc.solver, guess=v_guess)
            except VoltageSolverError as exc:
                done = stop
                fault_time = last * sc.dt
                fault = f"voltage solver fault at t = {fault_time:.6g} s: {exc}"
                break
            v_guess = ve
            v_t.append(last * sc.dt)
            v_end.append(ve)
            v_dev.append(v_ref - ve)
        k = stop

    if fault:
        log.warning("%s: %s", sc.name, fault)
    sl = slice(0, done)
    return ScenarioTrace(
        scenario=sc,
        t=t[sl],
        df=out_df[sl],
        dp_load=series.load(ticks[sl]) if done else np.empty(0),
        dp_pv=series.pv(ticks[sl]) if done else np.empty(0),
        dp_edc=series.edc(ticks[sl]) if done else np.empty(0),
        dp_lfc=exo_lfc[: 2 * done : 2],
        turbine=out_pm[sl],
        ev_w=out_ev_w[sl],
        ev_pu=out_ev_pu[sl],
        p_ref=out_ref[sl],
        p_out=out_out[sl],
        v_t=np.array(v_t),
        v_end=np.array(v_end),
        v_dev=np.array(v_dev),
        v_ref_end=v_ref,
        bounds=bound_log,
        profiles=profiles,
        fault=fault,
        fault_time=fault_time,
    )


def static_deviation(scenario: Scenario, powers_w: Sequence[float], t: float = 0.0,
                     loads: Sequence[LoadSpec] | None = None) -> float:
    """End-of-feeder voltage drop (pu) caused by station powers, loads held fixed."""
    sc = scenario
    loads_inj = load_injections(sc.loads if loads is None else loads, sc.base)
    v_ref = end_voltage(sc.feeder, loads_inj, sc.solver)
    inj = loads_inj + station_injections(sc.stations_at(t), powers_w, sc.base)
    return v_ref - end_voltage(sc.feeder, inj, sc.solver)


def static_control_error(scenario: Scenario, t: float = 0.0) -> dict:
    """Nonlinear end deviation at the synthesised caps versus the limits (volts).

    Charging: stations at ``-alpha_cha P_max``; discharging at ``+alpha_discha P_max``.
    """
    sc = scenario
    specs = sc.stations_at(t)
    bset = synthesize_bounds(sc.feeder, specs, sc.limits, t, sc.bound_update_period)
    vb = sc.base.v_base
    dev_cha = static_deviation(sc, [-bset.alpha_cha * p for p in bset.p_max], t) * vb
    dev_dis = -static_deviation(sc, [bset.alpha_discha * p for p in bset.p_max], t) * vb
    lim_cha = sc.limits.dv_cha_limit * vb
    lim_dis = sc.limits.dv_discha_limit * vb
    return {
        "alpha_cha": bset.alpha_cha,
        "alpha_discha": bset.alpha_discha,
        "dev_cha_volts": dev_cha,
        "dev_discha_volts": dev_dis,
        "error_cha_volts": abs(dev_cha - lim_cha),
        "error_discha_volts": abs(dev_dis - lim_dis),
    }


def summarize(trace: ScenarioTrace) -> dict:
    sc = trace.scenario
    vb = sc.base.v_base
    lim_cha = sc.limits.dv_cha_limit * vb
    lim_dis = sc.limits.dv_discha_limit * vb
    df = trace.df
    dev = trace.v_dev * vb
    if dev.size:
        violation = float(np.max(np.maximum(np.maximum(dev - lim_cha, -dev - lim_dis), 0.0)))
        max_drop = float(np.max(dev))
        max_rise = float(np.max(-dev))
    else:
        violation = max_drop = max_rise = float("nan")
    try:
        control_error = static_control_error(sc)["error_cha_volts"]
    except VoltageSolverError:
        control_error = float("nan")
    return {
        "rms_df_hz": float(np.sqrt(np.mean(df * df))) if df.size else float("nan"),
        "max_abs_df_hz": float(np.max(np.abs(df))) if df.size else float("nan"),
        "max_drop_volts": max_drop,
        "max_rise_volts": max_rise,
        "max_violation_volts": violation,
        "control_error_volts": control_error,
        "fault": trace.fault or "",
    }


def scale_loads(loads: Sequence[LoadSpec], fraction: float, s_base: float) -> tuple:
    """Rescale loads proportionally so their total equals ``fraction * s_base``."""
    total = sum(ld.p_load for ld in loads)
    if not total > 0:
        raise ScenarioValidationError("loading_fraction sweep needs a scenario with loads")
    k = fraction * s_base / total
    return tuple(LoadSpec(ld.location_km, ld.p_load * k) for ld in loads)


def with_parameter(base: Scenario, parameter: str, value: float) -> Scenario:
    """Copy of ``base`` with one sweep parameter set (limits in volts)."""
    if parameter == "df1":
        return replace(base, droop=DroopConfig(float(value)))
    if parameter == "dv_cha_limit":
        lim = VoltageLimits(value / base.base.v_base, base.limits.dv_discha_limit)
        return replace(base, limits=lim)
    if parameter == "loading_fraction":
        return replace(base, loads=scale_loads(base.loads, value, base.base.s_base))
    raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")


def _sweep_one(args):
    base, parameter, value = args
    try:
        sc = with_parameter(base, parameter, value)
        return value, summarize(run(sc))
    except (VoltageSolverError, ValueError) as exc:
        return value, {"fault": f"{type(exc).__name__}: {exc}"}


def sweep(base: Scenario, parameter: str, values: Sequence[float], workers: int | None = None):
    """One isolated run per value; per-run faults are reported, not raised."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")
    if not values:
        raise ValueError("sweep needs at least one value")
    jobs = [(base, parameter, v) for v in values]
    if workers is None:
        workers = min(len(jobs), os.cpu_count() or 1)
    if workers <= 1:
        return [_sweep_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_one, jobs))
