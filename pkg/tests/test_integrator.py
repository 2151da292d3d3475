import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conftest import random_q_points
from mosaic_evo.errors import IntegrationError, InvalidStateError
from mosaic_evo.ode import integrate, linear_fixed_point, nonlinear_fixed_point
from mosaic_evo.ode.integrator import read_trajectory_csv, write_trajectory_csv
from mosaic_evo.table import EventType, FundamentalTable, builtin_linear, builtin_nonlinear, vector_field


def closed_form_linear(q, x0, t):
    xh = np.array(linear_fixed_point(q).coords)
    return xh + (np.asarray(x0) - xh) * np.exp(-(4 - 3 * q) * np.asarray(t))[:, None]


@given(st.floats(0.01, 0.99), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_linear_matches_closed_form(q, x, y):
    ts = np.linspace(0, 10, 201)
    tr = integrate(builtin_linear(q), (x, y), 10.0, sample_times=ts)
    exact = closed_form_linear(q, (x, y), ts)
    assert np.max(np.abs(tr.states - exact)) <= 1e-8


def test_nonlinear_converges_to_fixed_point():
    tr = integrate(builtin_nonlinear(1.0, 1.0), (0.5, 0.25), 30.0)
    assert np.hypot(tr.final.x - 0.4, tr.final.y - 0.2) <= 1e-6


@pytest.mark.parametrize("mu", [0.06, 1.0, 7.0])
def test_fixed_point_is_stationary(mu):
    fp = nonlinear_fixed_point(mu).coords
    ts = np.linspace(0, 100, 101)
    tr = integrate(builtin_nonlinear(1.0, mu), fp, 100.0, sample_times=ts)
    assert np.max(np.abs(tr.states - fp)) <= 1e-10
    assert tr.reason == "converged-to-fixed-point"


def test_agrees_with_scipy_oracle(rng):
    for mu in (0.06, 0.5, 3.0):
        table = builtin_nonlinear(1.0, mu)
        for x0 in random_q_points(rng, 3):
            ts = np.linspace(0, 8, 81)
            ours = integrate(table, x0, 8.0, sample_times=ts).states
            ref = solve_ivp(lambda t, u: vector_field(table, tuple(u)), (0, 8), x0, method="DOP853",
                            rtol=1e-12, atol=1e-14, t_eval=ts).y.T
            assert np.max(np.abs(ours - ref)) <= 1e-8


def test_exit_detection_and_default_continuation():
    tr = integrate(builtin_linear(0.685), (0.377, 0.233), 10.0)
    assert tr.exited_q
    assert tr.reason != "exited-Q"  # reported, not stopping
    x, y = tr.exit_point
    assert abs(y - (0.5 - x)) <= 1e-8  # crosses L2
    stop = integrate(builtin_linear(0.685), (0.377, 0.233), 10.0, stop_on_exit=True)
    assert stop.reason == "exited-Q"
    assert stop.exit_time == pytest.approx(tr.exit_time, abs=1e-10)
    assert stop.t_final > stop.exit_time


def test_samples_after_early_stop_hold_final_state():
    ts = np.linspace(0, 500, 11)
    tr = integrate(builtin_nonlinear(1.0, 1.0), (0.45, 0.3), 500.0, sample_times=ts)
    assert tr.reason == "converged-to-fixed-point"
    assert tr.t_final < 500
    assert np.array_equal(tr.states[-1], tr.step_states[-1])
    assert np.all(np.diff(tr.t) > 0)


def test_zero_horizon():
    tr = integrate(builtin_linear(0.3), (0.3, 0.2), 0.0)
    assert len(tr) == 1 and tuple(tr.states[0]) == (0.3, 0.2)


def test_input_checks():
    t = builtin_linear(0.3)
    with pytest.raises(InvalidStateError):
        integrate(t, (math.nan, 0.2), 1.0)
    with pytest.raises(InvalidStateError):
        integrate(t, (0.1, 0.2, 0.3), 1.0)
    with pytest.raises(ValueError):
        integrate(t, (0.3, 0.2), 1.0, rtol=0.0)
    with pytest.raises(ValueError):
        integrate(t, (0.3, 0.2), 1.0, sample_times=[0.0, 0.5, 0.5])


def test_blow_up_raises():
    # dx/dt = x^2 blows up at t = 1/x0
    t = FundamentalTable(("X0", "X1"), (EventType("grow", (0, 1), 1.0, (-1, 0)),))
    assert vector_field(t, (2.0,)) == pytest.approx((4.0,))
    with pytest.raises(IntegrationError):
        integrate(t, (1.0,), 2.0)


def test_one_dimensional_table_integrates():
    t = FundamentalTable(("X0", "X1"), (EventType("a", (1, 0), 1.0, (2, 1)),))
    tr = integrate(t, (0.0,), 20.0)
    assert tr.final.coords[0] == pytest.approx(0.5, abs=1e-9)
    assert not tr.exited_q


def test_csv_roundtrip(tmp_path):
    ts = np.linspace(0, 1, 5)
    tr = integrate(builtin_linear(0.64), (0.377, 0.233), 1.0, sample_times=ts)
    p = tmp_path / "traj.csv"
    write_trajectory_csv(tr, p, comment="demo")
    raw = p.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "# demo" and lines[1] == "t,x,y"
    t, s = read_trajectory_csv(p)
    assert np.array_equal(t, ts) and np.array_equal(s, tr.states)


def test_step_metadata():
    tr = integrate(builtin_nonlinear(1.0, 0.3), (0.45, 0.3), 5.0)
    assert tr.n_steps == len(tr.step_t) - 1
    assert tr.n_evals >= 6 * tr.n_steps
    assert np.all(np.diff(tr.step_t) > 0)
    assert np.all(np.diff(tr.step_t) <= 0.1 + 1e-15)
