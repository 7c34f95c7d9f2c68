"""CSV emission for traces, voltage records, bound updates, sweeps and static profiles.

Every file starts with a header row. Floats are written as ``%.16e``
(17 significant digits) so that two runs of the same scenario produce
byte-identical files. Column schemas are frozen; see README.md.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import ScenarioTrace
from .voltage import VoltageProfile

FLOAT_FMT = "%.16e"

TRACE_COLUMNS = (
    "t_s", "df_hz", "dp_load_pu", "dp_pv_pu", "dp_edc_pu", "dp_lfc_pu",
    "turbine_pu", "ev_feeder_w", "ev_grid_pu",
)
VOLTAGE_COLUMNS = ("t_s", "v_end_pu", "v_end_volts", "dev_pu", "dev_volts")
BOUNDS_COLUMNS = (
    "t_s", "valid_until_s", "station", "ev_count", "p_max_w", "alpha_cha",
    "alpha_discha", "charge_cap_w", "discharge_cap_w", "dv_full_volts",
)
SUMMARY_COLUMNS = (
    "parameter", "value", "rms_df_hz", "max_abs_df_hz", "max_drop_volts",
    "max_rise_volts", "max_violation_volts", "control_error_volts", "fault",
)
PROFILE_COLUMNS = (
    "x_km", "v_pu", "v_volts", "theta_rad", "w_pu_per_km", "line_flow_pu",
    "deviation_pu", "deviation_volts",
)
PLOT_COLUMNS = ("t_s", "df_hz", "ev_total_mw", "v_end_volts")


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(c) for c in row])
    return path


def trace_stride(trace: ScenarioTrace) -> int:
    sc = trace.scenario
    return sc.ticks(sc.trace_period) if sc.trace_period else 1


def trace_header(n_stations: int) -> list[str]:
    cols = list(TRACE_COLUMNS)
    for i in range(n_stations):
        cols += [f"p_ref_w_{i}", f"p_out_w_{i}"]
    return cols


def write_trace(trace: ScenarioTrace, path: str | Path) -> Path:
    """Per-tick records, decimated to the scenario's ``trace_period``."""
    step = trace_stride(trace)
    idx = np.arange(0, trace.t.size, step)
    n_sta = trace.p_ref.shape[1] if trace.p_ref.ndim == 2 else 0

    def rows():
        for k in idx:
            row = [trace.t[k], trace.df[k], trace.dp_load[k], trace.dp_pv[k], trace.dp_edc[k],
                   trace.dp_lfc[k], trace.turbine[k], trace.ev_w[k], trace.ev_pu[k]]
            for i in range(n_sta):
                row += [trace.p_ref[k, i], trace.p_out[k, i]]
            yield row

    return write_rows(path, trace_header(n_sta), rows())


def write_voltage(trace: ScenarioTrace, path: str | Path) -> Path:
    vb = trace.v_base
    rows = ((t, v, v * vb, d, d * vb) for t, v, d in zip(trace.v_t, trace.v_end, trace.v_dev))
    return write_rows(path, VOLTAGE_COLUMNS, rows)


def write_bounds(trace: ScenarioTrace, path: str | Path) -> Path:
    vb = trace.v_base

    def rows():
        for t, counts, b in trace.bounds:
            for i, (n, p) in enumerate(zip(counts, b.p_max)):
                caps = b.station_caps(i)
                yield (t, b.valid_until, i, n, p, b.alpha_cha, b.alpha_discha,
                       -caps.charge, caps.discharge, b.dv_full * vb)

    return write_rows(path, BOUNDS_COLUMNS, rows())


def write_summary(parameter: str, results: Sequence[tuple], path: str | Path) -> Path:
    """One row per sweep value; faulted runs carry NaN metrics and the fault text."""
    nan = float("nan")

    def rows():
        for value, m in results:
            yield [parameter, float(value)] + [
                float(m.get(c, nan)) for c in SUMMARY_COLUMNS[2:-1]
            ] + [m.get("fault", "")]

    return write_rows(path, SUMMARY_COLUMNS, rows())


def write_fault(trace: ScenarioTrace, path: str | Path) -> Path:
    return write_rows(path, ("t_s", "message"), [(trace.fault_time, trace.fault)])


def write_plot_data(trace: ScenarioTrace, path: str | Path, period: float = 1.0) -> Path:
    """Downsampled series for plotting: Δf, total EV power and v(L) every ``period`` s."""
    sc = trace.scenario
    stride = max(1, sc.ticks(period))
    idx = np.arange(0, trace.t.size, stride)
    ev_mw = trace.ev_pu * sc.grid.s_grid / 1e6
    vb = trace.v_base
    if trace.v_t.size:
        v_volts = np.interp(trace.t[idx], trace.v_t, trace.v_end) * vb
    else:
        v_volts = np.full(idx.size, np.nan)
    rows = ((trace.t[k], trace.df[k], ev_mw[k], v) for k, v in zip(idx, v_volts))
    return write_rows(path, PLOT_COLUMNS, rows)


def write_simulation(trace: ScenarioTrace, out_dir: str | Path, plot_data: bool = False) -> list[Path]:
    out = Path(out_dir)
    files = [
        write_trace(trace, out / "trace.csv"),
        write_voltage(trace, out / "voltage.csv"),
        write_bounds(trace, out / "bounds.csv"),
    ]
    if plot_data:
        files.append(write_plot_data(trace, out / "plot_data.csv"))
    if trace.fault:
        files.append(write_fault(trace, out / "fault.csv"))
    return files


def profile_rows(profile: VoltageProfile, v_base: float, reference: VoltageProfile | None = None):
    """Rows of the static profile table; deviation is against ``reference`` (or v_bank)."""
    if reference is None:
        ref = np.full(profile.x.size, profile.v_bank)
    else:
        ref = np.interp(profile.x, reference.x, reference.v)
    dev = ref - profile.v
    for i in range(profile.x.size):
        yield (profile.x[i], profile.v[i], profile.v[i] * v_base, profile.theta[i],
               profile.w[i], profile.f[i], dev[i], dev[i] * v_base)


def write_profile(profile: VoltageProfile, v_base: float, path: str | Path,
                  reference: VoltageProfile | None = None) -> Path:
    return write_rows(path, PROFILE_COLUMNS, profile_rows(profile, v_base, reference))
