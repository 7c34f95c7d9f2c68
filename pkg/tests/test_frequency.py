import math
from dataclasses import replace

import numpy as np
import pytest

from v2gcosim.engine import run
from v2gcosim.frequency import (
    ExogenousSeries,
    FrequencyState,
    GridDynamicsConfig,
    HorizonError,
    NumericalFault,
    PiecewiseLinear,
    net_imbalance,
    simulate_frequency,
    step_frequency,
    synthetic_series,
)


def constant_series(horizon, load=0.0, pv=0.0, lfc=0.0, edc=0.0):
    c = lambda v: PiecewiseLinear.constant(v, horizon)  # noqa: E731
    return ExogenousSeries(c(load), c(pv), c(lfc), c(edc))


def run_constant(cfg, dp, seconds, dt=0.01):
    s = FrequencyState()
    for _ in range(int(round(seconds / dt))):
        s = step_frequency(s, dp, cfg, dt)
    return s


def test_equilibrium_exact():
    s = run_constant(GridDynamicsConfig(), 0.0, 50.0)
    assert s == FrequencyState(0.0, 0.0, 0.0)


def test_gain_without_governor():
    cfg = GridDynamicsConfig(governor_droop=math.inf)
    tau = cfg.inertia / cfg.damping
    assert tau == 4.5
    s = run_constant(cfg, 0.018, 10 * tau)
    assert s.dw == pytest.approx(0.009, rel=1e-3)
    # first-order response at one time constant
    s1 = run_constant(cfg, 0.018, tau)
    assert s1.dw == pytest.approx(0.009 * (1 - math.exp(-1)), rel=1e-6)


def test_gain_with_governor():
    cfg = GridDynamicsConfig()
    s = run_constant(cfg, 0.018, 300.0)
    assert s.dw == pytest.approx(0.018 / (cfg.damping + cfg.inv_droop), rel=1e-3)


def test_df_conversion():
    assert FrequencyState(0.001).df(50.0) == pytest.approx(0.05)


def test_step_validation():
    cfg = GridDynamicsConfig()
    for dt in (0.0, -0.01, 0.2):
        with pytest.raises(ValueError):
            step_frequency(FrequencyState(), 0.0, cfg, dt)
    with pytest.raises(NumericalFault):
        step_frequency(FrequencyState(), float("inf"), cfg, 0.01)
    with pytest.raises(ValueError):
        GridDynamicsConfig(inertia=0.0)
    with pytest.raises(ValueError):
        GridDynamicsConfig(damping=-1.0)


def test_net_imbalance():
    ser = constant_series(10.0, load=0.01, pv=0.004, edc=0.002)
    assert net_imbalance(1.0, ser, 0.0) == pytest.approx(-0.004)
    assert net_imbalance(1.0, ser, 0.001) - net_imbalance(1.0, ser, 0.0) == pytest.approx(0.001, rel=1e-12)
    assert net_imbalance(1.0, constant_series(10.0), 0.0) == 0.0
    with pytest.raises(HorizonError):
        net_imbalance(11.0, ser, 0.0)


def test_piecewise_linear(tmp_path):
    p = PiecewiseLinear([0.0, 10.0], [0.0, 1.0])
    assert p(2.5) == 0.25
    assert p.covers(0.0, 10.0) and not p.covers(0.0, 11.0)
    with pytest.raises(ValueError):
        PiecewiseLinear([0.0, 0.0], [1.0, 2.0])
    f = tmp_path / "s.csv"
    f.write_text("# pv deviation\ntime_s,value_pu\n0,0.0\n5,0.01\n10,0.0\n")
    q = PiecewiseLinear.from_csv(f)
    assert q(2.5) == pytest.approx(0.005)


def test_synthetic_series_reproducible_and_bounded():
    a = synthetic_series(600.0, 11)
    b = synthetic_series(600.0, 11)
    c = synthetic_series(600.0, 12)
    assert np.array_equal(a.pv.values, b.pv.values) and np.array_equal(a.load.values, b.load.values)
    assert not np.array_equal(a.pv.values, c.pv.values)
    assert np.max(np.abs(a.pv.values)) <= 0.06 and np.max(np.abs(a.load.values)) <= 0.03
    t = np.linspace(0, 600, 1001)
    assert np.std(a.dp_exogenous(t)) > 0


def test_dt_halving_frequency_model_alone():
    ser = synthetic_series(600.0, 5)
    cfg = GridDynamicsConfig()
    _, a = simulate_frequency(cfg, ser, 600.0, 0.01)
    _, b = simulate_frequency(cfg, ser, 600.0, 0.005)
    assert np.max(np.abs(a - b[::2])) < 1e-4


@pytest.mark.slow
@pytest.mark.parametrize("mode", ["no_ev", "multi_objective", "single_objective"])
def test_dt_halving_reference_scenario(sec5, mode):
    a = run(replace(sec5, mode=mode))
    b = run(replace(sec5, mode=mode, dt=0.005))
    assert np.max(np.abs(a.df - b.df[::2])) < 1e-4


def test_discharge_reduces_under_frequency():
    cfg = GridDynamicsConfig()
    knots = ([0.0, 1.0, 1.0 + 1e-9, 60.0], [0.0, 0.0, 0.01, 0.01])
    ser = ExogenousSeries(PiecewiseLinear(*knots), *(PiecewiseLinear.constant(0.0, 60.0) for _ in range(3)))
    t, base = simulate_frequency(cfg, ser, 60.0, 0.01)
    _, ev = simulate_frequency(cfg, ser, 60.0, 0.01, ev_total=lambda x: 0.002 if x > 1.0 else 0.0)
    after = t > 1.0
    assert base[np.argmax(np.abs(base))] < 0  # under-frequency event
    assert np.all(np.abs(ev[after]) < np.abs(base[after]))
    assert np.array_equal(ev[~after], base[~after])
