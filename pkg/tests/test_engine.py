import math
from dataclasses import replace

import numpy as np
import pytest

from v2gcosim.engine import (
    ScenarioValidationError,
    SeriesSpec,
    StationSchedule,
    run,
    static_control_error,
    summarize,
    sweep,
    with_parameter,
)
from v2gcosim.frequency import simulate_frequency
from v2gcosim.output import trace_stride, write_trace

SHORT = 120.0


@pytest.fixture(scope="module")
def short5(sec5):
    return replace(sec5, horizon=SHORT, bound_update_period=60.0)


@pytest.fixture(scope="module")
def traces(short5, sec7):
    return {
        "multi": run(short5),
        "single": run(replace(short5, mode="single_objective")),
        "none": run(replace(short5, mode="no_ev")),
        "sec7": run(sec7),
    }


def test_no_ev_equals_frequency_model(short5, traces):
    tr = traces["none"]
    assert not np.any(tr.p_out) and not np.any(tr.ev_w)
    series = short5.series.materialize(short5.horizon, short5.seed)
    _, df = simulate_frequency(short5.grid, series, short5.horizon, short5.dt)
    assert np.array_equal(tr.df, df[:-1])


@pytest.mark.parametrize("key", ["multi", "single", "sec7"])
def test_conservation_at_aggregation(traces, key):
    tr = traces[key]
    sc = tr.scenario
    for k in range(0, tr.t.size, 37):
        feeder_w = math.fsum(tr.p_out[k])
        assert tr.ev_w[k] == pytest.approx(feeder_w, rel=1e-15, abs=1e-9)
        assert tr.ev_pu[k] * sc.grid.s_grid == pytest.approx(sc.replication * tr.ev_w[k], rel=1e-15)


@pytest.mark.parametrize("key", ["multi", "single", "sec7"])
def test_references_never_exceed_caps(traces, key):
    tr = traces[key]
    sc = tr.scenario
    n_bound = sc.ticks(sc.bound_update_period)
    for j, (t0, _, b) in enumerate(tr.bounds):
        rows = slice(j * n_bound, (j + 1) * n_bound)
        cha = np.array([c.charge for c in b.caps_watts()])
        dis = np.array([c.discharge for c in b.caps_watts()])
        assert np.all(tr.p_ref[rows] >= -cha) and np.all(tr.p_ref[rows] <= dis)
        if sc.delay == 0 and sc.lag == 0:
            assert np.all(tr.p_out[rows] >= -cha) and np.all(tr.p_out[rows] <= dis)
            assert np.array_equal(tr.p_out[rows], tr.p_ref[rows])


def test_record_counts(traces, tmp_path):
    for tr in traces.values():
        sc = tr.scenario
        assert tr.t.size == sc.ticks(sc.horizon)
        assert tr.v_t.size == round(sc.horizon / sc.voltage_eval_period)
        assert len(tr.bounds) == round(sc.horizon / sc.bound_update_period)
        assert np.all(np.diff(tr.t) > 0) and np.all(np.diff(tr.v_t) > 0)
        path = write_trace(tr, tmp_path / "t.csv")
        rows = path.read_text().count("\n") - 1
        assert rows == math.ceil(tr.t.size / trace_stride(tr))


def test_schedule_sampled_at_bound_updates(traces, sec7):
    tr = traces["sec7"]
    for t0, counts, b in tr.bounds:
        assert counts == tuple(s.count_at(t0) for s in sec7.stations)
        assert b.valid_from == t0 and b.valid_until == t0 + sec7.bound_update_period
    assert tr.bounds[1][1] != tr.bounds[2][1]  # EV counts step at 120 s
    assert tr.bounds[2][2].alpha_cha != tr.bounds[1][2].alpha_cha


def test_station_schedule_lookup():
    s = StationSchedule(0, 1.0, 4e3, ((0.0, 5), (10.0, 7), (20.0, 0)))
    assert [s.count_at(t) for t in (0.0, 9.99, 10.0, 15.0, 25.0)] == [5, 5, 7, 7, 0]


def test_multi_objective_respects_voltage_limits(traces):
    for key in ("multi", "sec7"):
        assert summarize(traces[key])["max_violation_volts"] <= 0.1 * 80.0


def test_single_objective_ignores_bounds(traces):
    assert all(b.alpha_cha == b.alpha_discha == 1.0 for _, _, b in traces["single"].bounds)


def test_step_event_ordering(sec5):
    # a 0.01 pu load step at t = 1 s, no other disturbances
    step = SeriesSpec(load=((0.0, 0.0), (1.0, 0.0), (1.01, 0.01), (60.0, 0.01)),
                      pv=((0.0, 0.0), (60.0, 0.0)))
    sc = replace(sec5, horizon=60.0, bound_update_period=60.0, series=step)
    dfs = {m: run(replace(sc, mode=m)).df for m in ("no_ev", "multi_objective", "single_objective")}
    # from the first EV response to the uncontrolled nadir
    idx = np.arange(dfs["no_ev"].size)
    first = (idx > 102) & (idx <= np.argmin(dfs["no_ev"]))
    assert first.sum() > 100
    assert np.all(np.abs(dfs["multi_objective"][first]) < np.abs(dfs["no_ev"][first]))
    assert np.all(np.abs(dfs["single_objective"][first]) <= np.abs(dfs["multi_objective"][first]))
    nadir = {m: np.min(df) for m, df in dfs.items()}
    assert nadir["no_ev"] < nadir["multi_objective"] < nadir["single_objective"] < 0


def test_profile_snapshots(sec7):
    tr = run(replace(sec7, horizon=10.0, bound_update_period=10.0), profile_times=(5.0,))
    prof = tr.profiles[5.0]
    assert prof.v_end == tr.v_end[list(tr.v_t).index(5.0)]


def test_voltage_fault_truncates(sec5):
    heavy = with_parameter(replace(sec5, horizon=10.0, bound_update_period=10.0), "loading_fraction", 3.0)
    tr = run(heavy)
    assert tr.fault and "voltage solver fault" in tr.fault
    assert tr.t.size == 0 and tr.fault_time == 0.0


def test_numerical_fault_truncates(sec5):
    bad = SeriesSpec(load=((0.0, 0.0), (5.0, 0.0), (5.5, float("nan")), (10.0, 0.0)))
    tr = run(replace(sec5, horizon=10.0, bound_update_period=10.0, series=bad))
    assert tr.fault and "non-finite" in tr.fault
    assert 0 < tr.t.size < 1000 and np.all(np.isfinite(tr.df))
    assert tr.t[-1] == pytest.approx(tr.fault_time)


def test_sweep_continues_after_fault(sec5):
    sc = replace(sec5, horizon=10.0, bound_update_period=10.0)
    res = sweep(sc, "loading_fraction", [0.1, 3.0, 0.2], workers=1)
    assert [v for v, _ in res] == [0.1, 3.0, 0.2]
    assert not res[0][1]["fault"] and res[1][1]["fault"] and not res[2][1]["fault"]


def test_sweep_in_worker_processes(sec5):
    sc = replace(sec5, horizon=10.0, bound_update_period=10.0)
    serial = sweep(sc, "df1", [0.2, 0.4], workers=1)
    parallel = sweep(sc, "df1", [0.2, 0.4], workers=2)
    assert serial == parallel


def test_sweep_arguments(sec5):
    with pytest.raises(ValueError):
        sweep(sec5, "inertia", [1.0])
    with pytest.raises(ValueError):
        sweep(sec5, "df1", [])
    lim = with_parameter(sec5, "dv_cha_limit", 60.0)
    assert lim.limits.dv_cha_limit == pytest.approx(60.0 / 6600.0)


def test_static_control_error_reference(sec5_80_30):
    ce = static_control_error(sec5_80_30)
    assert ce["dev_cha_volts"] == pytest.approx(80.0, rel=0.1)
    assert ce["dev_discha_volts"] == pytest.approx(30.0, rel=0.1)
    assert ce["error_cha_volts"] == pytest.approx(abs(ce["dev_cha_volts"] - 80.0), abs=1e-9)


@pytest.mark.parametrize("change,match", [
    ({"dt": 0.03}, "not a multiple"),
    ({"replication": 0}, "replication"),
    ({"mode": "both"}, "mode"),
    ({"horizon": 0.0}, "horizon"),
    ({"voltage_eval_period": 0.015}, "voltage_eval_period"),
])
def test_validation(sec5, change, match):
    with pytest.raises(ScenarioValidationError, match=match):
        replace(sec5, **change).validate()


def test_station_outside_feeder(sec5):
    st = sec5.stations
    bad = st[:-1] + (replace(st[-1], location_km=5.0),)
    with pytest.raises(ScenarioValidationError, match="station 7"):
        replace(sec5, stations=bad).validate()


def test_engine_conversion_matches_reference_model(traces, sec7):
    from v2gcosim.control import ConversionDynamics

    tr = traces["sec7"]
    for i in range(tr.p_ref.shape[1]):
        dyn = ConversionDynamics(sec7.delay, sec7.lag, sec7.dt)
        expected = np.array([dyn.step(r) for r in tr.p_ref[:, i]])
        assert np.array_equal(expected, tr.p_out[:, i])
