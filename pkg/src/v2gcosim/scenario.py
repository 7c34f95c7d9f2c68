"""Scenario files: parsing and validation, plus the bundled reference cases.

A scenario is a TOML document. Every physical field carries its unit in the
key name (``dv_cha_limit_volts``, ``length_km``...). Unknown keys are rejected.
See ``scenarios/paper_sec5.scn`` for an annotated example.
"""

from __future__ import annotations

import logging
import math
import re
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .bounds import VoltageLimits
from .control import DEFAULT_DF1, DroopConfig
from .engine import Scenario, ScenarioValidationError, SeriesSpec, StationSchedule
from .frequency import GridDynamicsConfig
from .grid import ConfigurationError, LoadSpec, PerUnitBase, build_feeder
from .voltage import SolverConfig

log = logging.getLogger(__name__)

SCENARIO_DIR = "scenarios"


class ScenarioError(ValueError):
    """Schema or unit violation in a scenario file."""

    def __init__(self, field: str, reason: str, line: int | None = None, path: str | None = None):
        self.field, self.reason, self.line, self.path = field, reason, line, path
        where = f"{path or '<scenario>'}:{line if line else '?'}"
        super().__init__(f"{where}: {field}: {reason}")


# (key, required, default); None default + not required means optional/absent
_SCHEMA = {
    "base": {
        "s_base_va": (True, None),
        "v_base_volts": (True, None),
        "f_nominal_hz": (False, 50.0),
    },
    "grid": {
        "inertia_s": (False, 9.0),
        "damping_pu": (False, 2.0),
        "capacity_va": (False, 8.3e9),
        "governor_droop_pu": (False, 0.05),
        "governor_time_s": (False, 0.2),
        "turbine_time_s": (False, 5.0),
    },
    "feeder": {
        "length_km": (True, None),
        "r_ohm_per_km": (True, None),
        "x_ohm_per_km": (True, None),
        "v_bank_pu": (False, 1.0),
    },
    "stations": {
        "location_km": (True, None),
        "p_per_ev_watts": (True, None),
        "ev_schedule": (True, None),
    },
    "loads": {
        "location_km": (True, None),
        "p_watts": (True, None),
        "q_vars": (False, 0.0),
    },
    "limits": {
        "dv_cha_limit_volts": (True, None),
        "dv_discha_limit_volts": (True, None),
    },
    "control": {
        "df1_hz": (False, None),
        "delay_s": (False, 0.0),
        "lag_s": (False, 0.0),
    },
    "engine": {
        "horizon_s": (True, None),
        "dt_s": (False, 0.01),
        "bound_update_period_s": (False, 900.0),
        "voltage_eval_period_s": (False, 1.0),
        "trace_period_s": (False, 0.0),
        "replication": (False, 1),
        "mode": (False, "multi_objective"),
        "seed": (False, 0),
    },
    "solver": {
        "shoot_tol_pu": (False, 1e-9),
        "max_newton_iters": (False, 50),
        "segment_step_km": (False, 1e-3),
    },
    "series": {
        "load": (False, None),
        "pv": (False, None),
        "lfc": (False, None),
        "edc": (False, None),
        "knot_interval_s": (False, 1.0),
        "pv_sigma_pu": (False, 0.006),
        "pv_bound_pu": (False, 0.06),
        "load_sigma_pu": (False, 0.003),
        "load_bound_pu": (False, 0.03),
    },
}
_ARRAY_TABLES = ("stations", "loads")
_TOP_LEVEL = {"name"}


def _line_index(text: str) -> dict:
    """Map (section, item index, key) to 1-based line numbers."""
    index: dict = {}
    section, item = "", None
    counts: dict = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if m := re.match(r"\[\[\s*([\w.]+)\s*\]\]", line):
            section = m.group(1)
            item = counts.get(section, 0)
            counts[section] = item + 1
            index.setdefault((section, item, None), no)
        elif m := re.match(r"\[\s*([\w.]+)\s*\]", line):
            section, item = m.group(1), None
            index.setdefault((section, None, None), no)
        elif m := re.match(r"([\w-]+)\s*=", line):
            index.setdefault((section, item, m.group(1)), no)
    return index


class _Reader:
    def __init__(self, doc: dict, text: str, path: str | None):
        self.doc, self.path = doc, path
        self.lines = _line_index(text)

    def fail(self, section, item, key, reason):
        line = self.lines.get((section, item, key)) or self.lines.get((section, item, None))
        name = section if item is None else f"{section}[{item}]"
        field = f"{name}.{key}" if key else name
        raise ScenarioError(field, reason, line, self.path)

    def table(self, section, data, item=None) -> dict:
        if not isinstance(data, dict):
            self.fail(section, item, None, "expected a table")
        schema = _SCHEMA[section]
        for key in data:
            if key not in schema:
                self.fail(section, item, key, "unknown key")
        out = {}
        for key, (required, default) in schema.items():
            if key in data:
                out[key] = data[key]
            elif required:
                self.fail(section, item, key, "missing required key")
            else:
                out[key] = default
        return out

    def number(self, section, item, key, value, positive=False, nonneg=False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(section, item, key, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            self.fail(section, item, key, "must be finite")
        if positive and not value > 0:
            self.fail(section, item, key, f"must be positive, got {value}")
        if nonneg and value < 0:
            self.fail(section, item, key, f"must be non-negative, got {value}")
        return value


def _series_source(rd: _Reader, key, value, base_dir: Path | None):
    if value is None:
        return None
    if isinstance(value, str):
        p = Path(value)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        if not p.exists():
            rd.fail("series", None, key, f"CSV file {str(p)!r} not found")
        return str(p.resolve())
    if isinstance(value, list):
        pairs = []
        for row in value:
            if not (isinstance(row, list) and len(row) == 2):
                rd.fail("series", None, key, "inline series rows must be [time_s, value_pu]")
            pairs.append((rd.number("series", None, key, row[0]), rd.number("series", None, key, row[1])))
        return tuple(pairs)
    rd.fail("series", None, key, "expected a CSV path or an inline [[time_s, value_pu], ...] array")


def parse_scenario(text: str, path: str | None = None, name: str | None = None) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError("<document>", f"not valid TOML: {exc}", None, path) from exc
    rd = _Reader(doc, text, path)
    for key in doc:
        if key not in _SCHEMA and key not in _TOP_LEVEL:
            rd.fail(key, None, None, "unknown section")
    for section in ("base", "feeder", "limits", "engine"):
        if section not in doc:
            raise ScenarioError(section, "missing required section", None, path)
    base_dir = Path(path).resolve().parent if path else None
    num = rd.number

    b = rd.table("base", doc["base"])
    try:
        base = PerUnitBase(
            num("base", None, "s_base_va", b["s_base_va"], positive=True),
            num("base", None, "v_base_volts", b["v_base_volts"], positive=True),
            num("base", None, "f_nominal_hz", b["f_nominal_hz"], positive=True),
        )
    except ConfigurationError as exc:
        rd.fail("base", None, None, str(exc))

    g = rd.table("grid", doc.get("grid", {}))
    grid = GridDynamicsConfig(
        inertia=num("grid", None, "inertia_s", g["inertia_s"], positive=True),
        damping=num("grid", None, "damping_pu", g["damping_pu"], nonneg=True),
        s_grid=num("grid", None, "capacity_va", g["capacity_va"], positive=True),
        governor_droop=(math.inf if g["governor_droop_pu"] in ("inf", "none")
                        else num("grid", None, "governor_droop_pu", g["governor_droop_pu"], positive=True)),
        governor_time=num("grid", None, "governor_time_s", g["governor_time_s"], positive=True),
        turbine_time=num("grid", None, "turbine_time_s", g["turbine_time_s"], positive=True),
        f_nominal=base.f_nominal,
    )

    fd = rd.table("feeder", doc["feeder"])
    feeder = build_feeder(
        num("feeder", None, "length_km", fd["length_km"], positive=True),
        num("feeder", None, "r_ohm_per_km", fd["r_ohm_per_km"], positive=True),
        num("feeder", None, "x_ohm_per_km", fd["x_ohm_per_km"], nonneg=True),
        base,
        num("feeder", None, "v_bank_pu", fd["v_bank_pu"], positive=True),
    )

    stations = []
    raw_stations = doc.get("stations", [])
    if not isinstance(raw_stations, list):
        rd.fail("stations", None, None, "expected an array of tables [[stations]]")
    for i, raw in enumerate(raw_stations):
        s = rd.table("stations", raw, i)
        loc = num("stations", i, "location_km", s["location_km"])
        if not 0.0 < loc < feeder.length_km:
            rd.fail("stations", i, "location_km",
                    f"station {i} at {loc} km lies outside (0, {feeder.length_km}) km")
        sched = s["ev_schedule"]
        if isinstance(sched, int) and not isinstance(sched, bool):
            sched = [[0.0, sched]]
        if not isinstance(sched, list) or not sched:
            rd.fail("stations", i, "ev_schedule", "expected [[time_s, count], ...] or a single count")
        rows = []
        for row in sched:
            if not (isinstance(row, list) and len(row) == 2 and isinstance(row[1], int)
                    and not isinstance(row[1], bool)):
                rd.fail("stations", i, "ev_schedule", "rows must be [time_s, integer count]")
            t_row = num("stations", i, "ev_schedule", row[0], nonneg=True)
            if row[1] < 0:
                rd.fail("stations", i, "ev_schedule", "EV counts must be non-negative")
            if rows and not t_row > rows[-1][0]:
                rd.fail("stations", i, "ev_schedule", "times must be strictly increasing")
            rows.append((t_row, int(row[1])))
        if rows[0][0] != 0.0:
            rd.fail("stations", i, "ev_schedule", "schedule must start at time 0")
        if stations and not loc > stations[-1].location_km:
            rd.fail("stations", i, "location_km", "stations must be strictly ordered by location")
        stations.append(StationSchedule(
            i, loc, num("stations", i, "p_per_ev_watts", s["p_per_ev_watts"], nonneg=True), tuple(rows)
        ))

    loads = []
    raw_loads = doc.get("loads", [])
    if not isinstance(raw_loads, list):
        rd.fail("loads", None, None, "expected an array of tables [[loads]]")
    for i, raw in enumerate(raw_loads):
        ld = rd.table("loads", raw, i)
        loc = num("loads", i, "location_km", ld["location_km"])
        if not 0.0 < loc <= feeder.length_km:
            rd.fail("loads", i, "location_km", f"load {i} at {loc} km lies outside (0, {feeder.length_km}] km")
        q = num("loads", i, "q_vars", ld["q_vars"])
        if q != 0.0:
            rd.fail("loads", i, "q_vars", "only unity-power-factor loads are supported")
        loads.append(LoadSpec(loc, num("loads", i, "p_watts", ld["p_watts"], nonneg=True)))

    lim = rd.table("limits", doc["limits"])
    limits = VoltageLimits(
        num("limits", None, "dv_cha_limit_volts", lim["dv_cha_limit_volts"], positive=True) / base.v_base,
        num("limits", None, "dv_discha_limit_volts", lim["dv_discha_limit_volts"], positive=True) / base.v_base,
    )

    ctl = rd.table("control", doc.get("control", {}))
    if ctl["df1_hz"] is None:
        log.warning("control.df1_hz not set; using the default %.1f Hz", DEFAULT_DF1)
        df1 = DEFAULT_DF1
    else:
        df1 = num("control", None, "df1_hz", ctl["df1_hz"], positive=True)
    delay = num("control", None, "delay_s", ctl["delay_s"], nonneg=True)
    lag = num("control", None, "lag_s", ctl["lag_s"], nonneg=True)

    eng = rd.table("engine", doc["engine"])
    for key in ("replication", "seed"):
        if not isinstance(eng[key], int) or isinstance(eng[key], bool):
            rd.fail("engine", None, key, "expected an integer")
    if not isinstance(eng["mode"], str):
        rd.fail("engine", None, "mode", "expected a string")

    sol = rd.table("solver", doc.get("solver", {}))
    if not isinstance(sol["max_newton_iters"], int):
        rd.fail("solver", None, "max_newton_iters", "expected an integer")
    solver = SolverConfig(
        num("solver", None, "shoot_tol_pu", sol["shoot_tol_pu"], positive=True),
        sol["max_newton_iters"],
        num("solver", None, "segment_step_km", sol["segment_step_km"], positive=True),
    )

    ser = rd.table("series", doc.get("series", {}))
    series = SeriesSpec(
        load=_series_source(rd, "load", ser["load"], base_dir),
        pv=_series_source(rd, "pv", ser["pv"], base_dir),
        lfc=_series_source(rd, "lfc", ser["lfc"], base_dir),
        edc=_series_source(rd, "edc", ser["edc"], base_dir),
        knot_interval=num("series", None, "knot_interval_s", ser["knot_interval_s"], positive=True),
        pv_sigma=num("series", None, "pv_sigma_pu", ser["pv_sigma_pu"], nonneg=True),
        pv_bound=num("series", None, "pv_bound_pu", ser["pv_bound_pu"], positive=True),
        load_sigma=num("series", None, "load_sigma_pu", ser["load_sigma_pu"], nonneg=True),
        load_bound=num("series", None, "load_bound_pu", ser["load_bound_pu"], positive=True),
    )

    scenario = Scenario(
        name=str(doc.get("name", name or "scenario")),
        base=base,
        grid=grid,
        feeder=feeder,
        stations=tuple(stations),
        loads=tuple(loads),
        limits=limits,
        droop=DroopConfig(df1),
        delay=delay,
        lag=lag,
        horizon=num("engine", None, "horizon_s", eng["horizon_s"], positive=True),
        dt=num("engine", None, "dt_s", eng["dt_s"], positive=True),
        bound_update_period=num("engine", None, "bound_update_period_s", eng["bound_update_period_s"], positive=True),
        voltage_eval_period=num("engine", None, "voltage_eval_period_s", eng["voltage_eval_period_s"], positive=True),
        trace_period=num("engine", None, "trace_period_s", eng["trace_period_s"], nonneg=True),
        replication=eng["replication"],
        mode=eng["mode"],
        seed=eng["seed"],
        series=series,
        solver=solver,
    )
    try:
        scenario.validate()
    except ScenarioValidationError as exc:
        msg = str(exc)
        word = msg.split()[0]
        keys = [k for k in (word + "_s", word) if k in _SCHEMA["engine"]]
        rd.fail("engine", None, keys[0] if keys else None, msg)
    try:
        series.materialize(scenario.horizon, scenario.seed)
    except ValueError as exc:  # coverage, ordering or CSV content
        words = str(exc).split()
        key = words[1] if len(words) > 1 and words[1] in ("load", "pv", "lfc", "edc") else None
        rd.fail("series", None, key, str(exc))
    return scenario


def resolve_path(path: str | Path) -> Path:
    """An existing file path, or the name of a bundled reference scenario."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("v2gcosim") / SCENARIO_DIR / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"scenario file {str(path)!r} not found")


def load_scenario(path: str | Path) -> Scenario:
    p = resolve_path(path)
    return parse_scenario(p.read_text(), str(p), p.stem)


def bundled_scenarios() -> list[str]:
    root = resources.files("v2gcosim") / SCENARIO_DIR
    return sorted(x.name for x in root.iterdir() if x.name.endswith(".scn"))


def _to_volts(pu: float, v_base: float) -> float:
    """Volts value that converts back to exactly ``pu``."""
    v = pu * v_base
    for cand in (round(v, 9), v, math.nextafter(v, math.inf), math.nextafter(v, -math.inf)):
        if cand / v_base == pu:
            return cand
    return v


def scenario_to_dict(sc: Scenario) -> dict:
    """Normalised document for ``sc`` (all defaults explicit, limits back in volts)."""
    vb = sc.base.v_base

    def src(value):
        if value is None:
            return None
        if isinstance(value, str):
            return value
        return [list(row) for row in value]

    series = {
        "knot_interval_s": sc.series.knot_interval,
        "pv_sigma_pu": sc.series.pv_sigma,
        "pv_bound_pu": sc.series.pv_bound,
        "load_sigma_pu": sc.series.load_sigma,
        "load_bound_pu": sc.series.load_bound,
    }
    for key in ("load", "pv", "lfc", "edc"):
        value = src(getattr(sc.series, key))
        if value is not None:
            series[key] = value
    return {
        "name": sc.name,
        "base": {"s_base_va": sc.base.s_base, "v_base_volts": sc.base.v_base,
                 "f_nominal_hz": sc.base.f_nominal},
        "grid": {
            "inertia_s": sc.grid.inertia,
            "damping_pu": sc.grid.damping,
            "capacity_va": sc.grid.s_grid,
            "governor_droop_pu": "inf" if math.isinf(sc.grid.governor_droop) else sc.grid.governor_droop,
            "governor_time_s": sc.grid.governor_time,
            "turbine_time_s": sc.grid.turbine_time,
        },
        "feeder": {"length_km": sc.feeder.length_km, "r_ohm_per_km": sc.feeder.r_per_km,
                   "x_ohm_per_km": sc.feeder.x_per_km, "v_bank_pu": sc.feeder.v_bank},
        "stations": [
            {"location_km": s.location_km, "p_per_ev_watts": s.p_per_ev,
             "ev_schedule": [[t, n] for t, n in s.schedule]}
            for s in sc.stations
        ],
        "loads": [{"location_km": ld.location_km, "p_watts": ld.p_load, "q_vars": ld.q_load}
                  for ld in sc.loads],
        "limits": {"dv_cha_limit_volts": _to_volts(sc.limits.dv_cha_limit, vb),
                   "dv_discha_limit_volts": _to_volts(sc.limits.dv_discha_limit, vb)},
        "control": {"df1_hz": sc.droop.df1, "delay_s": sc.delay, "lag_s": sc.lag},
        "engine": {
            "horizon_s": sc.horizon, "dt_s": sc.dt,
            "bound_update_period_s": sc.bound_update_period,
            "voltage_eval_period_s": sc.voltage_eval_period,
            "trace_period_s": sc.trace_period,
            "replication": sc.replication, "mode": sc.mode, "seed": sc.seed,
        },
        "solver": {"shoot_tol_pu": sc.solver.shoot_tol,
                   "max_newton_iters": sc.solver.max_newton_iters,
                   "segment_step_km": sc.solver.segment_step},
        "series": series,
    }


def dump_scenario(sc: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(sc))
