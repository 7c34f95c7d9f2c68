import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from v2gcosim.grid import LoadSpec, PerUnitBase, PointInjection, StationSpec, build_feeder, load_injections
from v2gcosim.voltage import (
    InfeasibleLoadingError,
    ModeError,
    NonConvergenceError,
    SolverConfig,
    approx_gradient,
    collocation_residual,
    end_deviation,
    end_voltage,
    lumped_oracle,
    random_injections,
    solve_bvp,
)


def two_bus_end_voltage(r, x, p_load, vs=1.0):
    """Closed-form receiving-end magnitude for a constant-power load at unity pf."""
    a = vs * vs - 2.0 * r * p_load
    v2 = 0.5 * (a + math.sqrt(a * a - 4.0 * (r * r + x * x) * p_load * p_load))
    return math.sqrt(v2)


@pytest.fixture(scope="module")
def unit_feeder():
    # z_base = 1 ohm, r = 1 ohm/km, x = 0 -> G/Y² = 1 pu km
    return build_feeder(5.0, 1.0, 0.0, PerUnitBase(1.0, 1.0))


def test_unloaded_feeder(feeder):
    prof = solve_bvp(feeder, [])
    assert np.all(prof.v == feeder.v_bank)
    assert np.all(prof.w == 0.0) and np.all(prof.theta == 0.0)
    assert lumped_oracle(feeder, []) == feeder.v_bank


def test_single_end_load_matches_closed_form(feeder):
    r = feeder.r_pu_per_km * feeder.length_km
    x = feeder.x_pu_per_km * feeder.length_km
    exact = two_bus_end_voltage(r, x, 0.05)
    assert exact == pytest.approx(0.9849651854, abs=1e-10)  # frozen
    prof = solve_bvp(feeder, [PointInjection(feeder.length_km, -0.05)])
    assert abs(prof.v_end - exact) < 1e-6
    assert abs(lumped_oracle(feeder, [PointInjection(feeder.length_km, -0.05)]) - exact) < 1e-9


def test_mid_feeder_load_matches_oracle(feeder):
    inj = [PointInjection(2.0, -0.08)]
    assert abs(solve_bvp(feeder, inj).v_end - lumped_oracle(feeder, inj)) < 1e-6


def test_boundary_conditions_and_residual(feeder):
    inj = [PointInjection(0.7, -0.05), PointInjection(2.2, 0.03), PointInjection(4.0, -0.02)]
    cfg = SolverConfig()
    prof = solve_bvp(feeder, inj, cfg)
    assert abs(prof.v[0] - feeder.v_bank) < cfg.shoot_tol
    assert abs(prof.w[-1]) < cfg.shoot_tol and abs(prof.f[-1]) < cfg.shoot_tol
    assert np.all(np.diff(prof.x) > 0) and prof.x[0] == 0.0 and prof.x[-1] == feeder.length_km
    assert np.all(prof.v > 0)
    assert collocation_residual(prof) < 1e-6
    assert prof.theta[0] == 0.0


def test_jump_conditions(feeder):
    p = -0.04
    prof = solve_bvp(feeder, [PointInjection(2.0, p)])
    i = np.searchsorted(prof.x, 2.0)
    # upstream of the load the slope equals the downstream one plus G P /(v Y²)
    h = prof.x[i] - prof.x[i - 1]
    w_up = (prof.v[i] - prof.v[i - 1]) / h
    assert w_up == pytest.approx(feeder.g_over_y2 * p / prof.v[i], rel=1e-3)
    assert prof.f[0] == pytest.approx(feeder.b_over_y2 * p, rel=1e-12)


def test_terminal_source_allowed_but_not_outside(feeder):
    end_voltage(feeder, [PointInjection(feeder.length_km, 0.01)])
    for x in (0.0, -0.1, feeder.length_km + 1e-6):
        with pytest.raises(ValueError):
            solve_bvp(feeder, [PointInjection(x, 0.01)])


def test_loads_only_profile_flat_beyond_loading_centre(sec5):
    prof = solve_bvp(sec5.feeder, load_injections(sec5.loads, sec5.base))
    last_load = max(ld.location_km for ld in sec5.loads)
    up = prof.x <= last_load
    assert np.all(np.diff(prof.v[up]) <= 0)
    beyond = prof.v[prof.x >= last_load]
    assert np.ptp(beyond) < 1e-12


def test_collapse_reported_by_both(feeder):
    for p in (0.3, 0.5):
        inj = [PointInjection(feeder.length_km, -p)]
        assert abs(end_voltage(feeder, inj) - lumped_oracle(feeder, inj)) < 1e-6
    heavy = [PointInjection(feeder.length_km, -0.6)]
    with pytest.raises(InfeasibleLoadingError):
        solve_bvp(feeder, heavy)
    with pytest.raises(InfeasibleLoadingError):
        lumped_oracle(feeder, heavy)


def test_non_convergence_reports_residual(feeder):
    cfg = SolverConfig(shoot_tol=1e-14, max_newton_iters=1)
    with pytest.raises(NonConvergenceError) as err:
        solve_bvp(feeder, [PointInjection(3.0, -0.2)], cfg)
    assert math.isfinite(err.value.residual)


def test_solver_config_validation():
    for kw in ({"shoot_tol": 0.0}, {"max_newton_iters": 0}, {"segment_step": 0.0}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


def test_determinism(feeder):
    inj = [PointInjection(1.0, -0.05), PointInjection(3.5, 0.02)]
    a, b = solve_bvp(feeder, inj), solve_bvp(feeder, inj)
    assert a.v.tobytes() == b.v.tobytes() and a.theta.tobytes() == b.theta.tobytes()


# linear approximation and end deviation

def test_gradient_examples(unit_feeder):
    inj = [PointInjection(3.0, -0.01)]
    assert approx_gradient(unit_feeder, inj, 1.0) == pytest.approx(-0.01, rel=1e-15)
    assert approx_gradient(unit_feeder, inj, 3.0) == 0.0
    assert approx_gradient(unit_feeder, inj, 4.0) == 0.0
    assert approx_gradient(unit_feeder, [], 1.0) == 0.0
    two = inj + [PointInjection(2.0, 0.03)]
    assert approx_gradient(unit_feeder, two, 0.0) == pytest.approx(0.02, rel=1e-12)
    with pytest.raises(ValueError):
        approx_gradient(unit_feeder, inj, 6.0)


@given(
    a=st.lists(st.tuples(st.floats(0.01, 5.0), st.floats(-0.1, 0.1)), max_size=6),
    b=st.lists(st.tuples(st.floats(0.01, 5.0), st.floats(-0.1, 0.1)), max_size=6),
    x=st.floats(0.0, 5.0),
)
def test_gradient_additive(unit_feeder, a, b, x):
    ia = [PointInjection(*t) for t in a]
    ib = [PointInjection(*t) for t in b]
    whole = approx_gradient(unit_feeder, ia + ib, x)
    parts = approx_gradient(unit_feeder, ia, x) + approx_gradient(unit_feeder, ib, x)
    assert whole == pytest.approx(parts, rel=1e-12, abs=1e-15)


def test_end_deviation_examples(unit_feeder):
    stations = [StationSpec(0, 1.0, 1, 1.0), StationSpec(1, 3.0, 1, 1.0)]
    assert end_deviation(unit_feeder, stations, [0.02, 0.01]) == pytest.approx(0.05, rel=1e-15)
    assert end_deviation(unit_feeder, stations, [-0.02, -0.01]) == pytest.approx(0.05, rel=1e-15)
    assert end_deviation(unit_feeder, stations, [0.0, 0.0]) == 0.0
    with pytest.raises(ModeError):
        end_deviation(unit_feeder, stations, [0.02, -0.01])
    with pytest.raises(ValueError):
        end_deviation(unit_feeder, stations, [0.02])


@given(
    locs=st.lists(st.floats(0.05, 4.6), min_size=1, max_size=8, unique=True),
    data=st.data(),
)
@settings(max_examples=40, deadline=None)
def test_linear_regime_agreement(feeder, locs, data):
    sign = data.draw(st.sampled_from([-1.0, 1.0]))
    total = data.draw(st.floats(0.005, 0.05))
    w = np.array(data.draw(st.lists(st.floats(0.1, 1.0), min_size=len(locs), max_size=len(locs))))
    powers = sign * total * w / w.sum()
    stations = [StationSpec(i, x, 1, 1.0) for i, x in enumerate(sorted(locs))]
    inj = [PointInjection(s.location_km, float(p)) for s, p in zip(stations, powers)]
    lin = end_deviation(feeder, stations, list(powers))
    exact = abs(feeder.v_bank - end_voltage(feeder, inj))
    assert abs(lin - exact) / lin < 0.02


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 16))
def test_oracle_equivalence_property(feeder, seed, n):
    inj = random_injections(feeder, n, np.random.default_rng(seed))
    assert sum(abs(i.p) for i in inj) <= 0.5 + 1e-12
    prof = solve_bvp(feeder, inj)
    assert abs(prof.v_end - lumped_oracle(feeder, inj)) < 1e-6


def test_oracle_point_limit(feeder):
    inj = [PointInjection(0.1 * (i + 1), -0.001) for i in range(33)]
    with pytest.raises(ValueError):
        lumped_oracle(feeder, inj)
