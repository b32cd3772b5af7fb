import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import predict_state_oracle
from roadbench.prediction import estimate_inputs, horizon_steps, predict_obstacle, predict_state, rollout_constant
from roadbench.scenario import Obstacle, ObstacleKind, RecordedState
from roadbench.states import PredInput, PredState


def car(kind=ObstacleKind.DYNAMIC_RECORDED):
    rec = (RecordedState(0, 0, 0, 0, 10), RecordedState(1, 1, 0, 0, 10))
    return Obstacle(3, 4.5, 1.8, kind, recorded_trajectory=rec if kind == ObstacleKind.DYNAMIC_RECORDED else None,
                    initial_state=None if kind == ObstacleKind.DYNAMIC_RECORDED else PredState(0, 0, 0, 0))


def test_constant_velocity_step():
    assert predict_state(PredState(0, 0, 10, 0), PredInput(0, 0), 0.1) == pytest.approx((1.0, 0, 10, 0), abs=1e-15)


def test_position_uses_previous_speed():
    s = predict_state(PredState(0, 0, 10, 0), PredInput(1.5, 0), 0.1)
    assert s.x == pytest.approx(1.0, abs=1e-15)
    assert s.v == pytest.approx(10.15, abs=1e-12)


def test_speed_clamped_at_zero():
    assert predict_state(PredState(0, 0, 0, 0), PredInput(-5, 0), 0.1).v == 0.0


@settings(max_examples=100, deadline=None)
@given(v0=st.floats(0, 30), a=st.floats(-10, 0), n=st.integers(1, 60))
def test_braking_never_reverses(v0, a, n):
    states = rollout_constant(PredState(0, 0, v0, 0), PredInput(a, 0), 0.1, n)
    xs = [s.x for s in states]
    assert all(s.v >= 0 for s in states)
    assert all(b >= a_ for a_, b in zip(xs, xs[1:]))


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-100, 100), y=st.floats(-100, 100), v=st.floats(0, 40), th=st.floats(-4, 4),
       a=st.floats(-8, 8), om=st.floats(-2, 2), dt=st.floats(0.01, 0.5))
def test_matches_oracle_exactly(x, y, v, th, a, om, dt):
    assert tuple(predict_state(PredState(x, y, v, th), PredInput(a, om), dt)) == predict_state_oracle(x, y, v, th, a, om, dt)


@settings(max_examples=100, deadline=None)
@given(v=st.floats(0, 30), th=st.floats(-math.pi, math.pi), n=st.integers(1, 50))
def test_zero_input_is_translation(v, th, n):
    states = rollout_constant(PredState(1, 2, v, th), PredInput(0, 0), 0.1, n)
    last = states[-1]
    assert math.hypot(last.x - 1, last.y - 2) == pytest.approx(n * 0.1 * v, abs=1e-9)
    assert last.v == v and last.theta == th


@settings(max_examples=100, deadline=None)
@given(x=st.floats(-50, 50), y=st.floats(-50, 50), v=st.floats(0, 30), th=st.floats(-3, 3),
       a=st.floats(-3, 3), om=st.floats(-1, 1), rot=st.floats(-math.pi, math.pi))
def test_rotational_symmetry(x, y, v, th, a, om, rot):
    c, s = math.cos(rot), math.sin(rot)

    def R(p):
        return PredState(c * p.x - s * p.y, s * p.x + c * p.y, p.v, p.theta + rot)

    run_then_rotate = [R(p) for p in rollout_constant(PredState(x, y, v, th), PredInput(a, om), 0.1, 20)]
    rotate_then_run = rollout_constant(R(PredState(x, y, v, th)), PredInput(a, om), 0.1, 20)
    for p, q in zip(run_then_rotate, rotate_then_run):
        assert p.x == pytest.approx(q.x, abs=1e-9) and p.y == pytest.approx(q.y, abs=1e-9)
        assert p.v == pytest.approx(q.v, abs=1e-9) and p.theta == pytest.approx(q.theta, abs=1e-9)


def test_stationary_history_gives_identical_rectangles():
    cur = PredState(5, 5, 0, 0)
    occ = predict_obstacle(car(), cur, history=[PredState(5, 5, 0, 0)])
    assert np.all(occ.corners == occ.corners[0])
    assert np.allclose(occ.states[0, :2], (5, 5))


def test_estimated_acceleration_and_speed():
    prev, cur = PredState(0, 0, 10, 0), PredState(1, 0, 11, 0)
    u = estimate_inputs([prev, cur], 0.1)
    assert u.a == pytest.approx(10.0) and u.omega == 0
    occ = predict_obstacle(car(), cur, history=[prev])
    # three steps of the recursion: 11 + 3 * 10 * 0.1
    assert occ.states[2, 3] == pytest.approx(14.0)


def test_no_history_means_zero_inputs():
    assert estimate_inputs([PredState(0, 0, 3, 0)], 0.1) == PredInput(0.0, 0.0)


def test_horizon_length():
    occ = predict_obstacle(car(), PredState(0, 0, 10, 0), horizon_s=3.0, dt=0.1)
    assert len(occ) == 30
    assert occ.t0_step == 1


@pytest.mark.parametrize("dt", [0.05, 0.1, 0.2, 0.25, 0.5, 1.0])
def test_horizon_steps_for_dividing_dt(dt):
    assert horizon_steps(3.0, dt) == round(3.0 / dt)
