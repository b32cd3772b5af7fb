import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roadbench.dynamics import Trajectory, emergency_braking, reconstruct_inputs, rollout, step_single_track
from roadbench.scenario import VehicleParameters
from roadbench.states import ControlInput, VehicleState

P = VehicleParameters()


def test_straight_constant_velocity():
    s = step_single_track(VehicleState(0, 0, 10, 0, 0), ControlInput(0, 0), 0.1, P)
    assert s == pytest.approx(VehicleState(1.0, 0, 10, 0, 0), abs=1e-15)


@pytest.mark.parametrize("delta", [0.0, 0.4, -0.8])
def test_rest_is_fixed_point(delta):
    s0 = VehicleState(3, -2, 0.0, 1.2, delta)
    assert step_single_track(s0, ControlInput(0, 0), 0.1, P) == s0


def test_heading_increment():
    s = step_single_track(VehicleState(0, 0, 10, 0, 0.1), ControlInput(0, 0), 0.1, P)
    # 0.1 * (10 / 2.9) * tan(0.1), evaluated to 30 digits
    assert s.phi == pytest.approx(0.0345981627880863967681976557432, abs=1e-12)


def test_bounds_are_clamped():
    s = step_single_track(VehicleState(0, 0, P.v_max, 0, P.delta_max), ControlInput(50, 50), 0.1, P)
    assert s.v == P.v_max and s.delta == P.delta_max


def test_identical_states_reconstruct_to_zero():
    st0 = VehicleState(1, 2, 0, 0.3, 0.1)
    u, res = reconstruct_inputs(Trajectory((st0, st0)), 0.1, P)
    assert u == [ControlInput(0.0, 0.0)]
    assert res[0] == 0.0


def test_teleport_residual():
    s0 = VehicleState(0, 0, 10, 0, 0)
    s1 = VehicleState(1.0 + 5.0, 0, 10, 0, 0)
    _, res = reconstruct_inputs(Trajectory((s0, s1)), 0.1, P)
    # one step reaches at most v_max * dt beyond the prediction
    assert res[0] >= 5.0 - P.v_max * 0.1
    assert res[0] >= 4.0


def test_too_short():
    with pytest.raises(ValueError):
        reconstruct_inputs(Trajectory((VehicleState(0, 0, 0, 0, 0),)), 0.1, P)


inputs = st.lists(st.tuples(st.floats(-P.a_max, P.a_max), st.floats(-P.v_delta_max, P.v_delta_max)),
                  min_size=1, max_size=30)


@settings(max_examples=150, deadline=None)
@given(v0=st.floats(0, 30), phi=st.floats(-math.pi, math.pi), u=inputs)
def test_round_trip_property(v0, phi, u):
    # keep the rollout inside the bounds so clamping never alters the inputs
    traj = rollout(VehicleState(0, 0, v0, phi, 0), [ControlInput(*x) for x in u], 0.1, P)
    arr = traj.as_array()
    if (arr[:, 2] >= P.v_max).any() or (arr[:, 2] <= P.v_min).any() or (np.abs(arr[:, 4]) >= P.delta_max).any():
        return
    rec, res = reconstruct_inputs(traj, 0.1, P)
    assert np.allclose(np.array(rec), np.array(u), atol=1e-9)
    assert res.max() <= 1e-9


@settings(max_examples=100, deadline=None)
@given(v0=st.floats(0, P.v_max), u=inputs)
def test_positions_grow_at_most_vmax_dt(v0, u):
    arr = rollout(VehicleState(0, 0, v0, 0, 0), [ControlInput(*x) for x in u], 0.1, P).as_array()
    step = np.linalg.norm(np.diff(arr[:, :2], axis=0), axis=1)
    assert np.isfinite(arr[:, 3]).all()
    assert (step <= P.v_max * 0.1 + 1e-9).all()


def test_step_is_pure():
    s0, u = VehicleState(1, 2, 3, 0.4, 0.05), ControlInput(1.0, 0.1)
    assert step_single_track(s0, u, 0.1, P) == step_single_track(s0, u, 0.1, P)


def test_emergency_braking_stops_within_stopping_distance():
    v0 = 15.0
    traj = emergency_braking(VehicleState(0, 0, v0, 0, 0.2), 0.1, P, 40)
    arr = traj.as_array()
    assert arr[-1, 2] == 0.0 and abs(arr[-1, 4]) == 0.0
    # forward Euler overshoots the continuous v^2 / (2 a) by at most one step of travel
    assert arr[-1, 0] <= v0**2 / (2 * P.a_max) + v0 * 0.1
    assert len(traj) == 41
