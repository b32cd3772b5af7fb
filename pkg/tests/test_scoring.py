import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import polynomial as Pn

from make_corpus import problem
from roadbench.dynamics import Trajectory
from roadbench.prediction import Occupancy
from roadbench.scenario import LaneletNetwork, Scenario, rectangle_polygon, straight_lanelet
from roadbench.scoring import W_DIST, WEIGHTS, CostReport, TrajectoryTooShort, tr1_cost
from roadbench.states import VehicleState

NET = LaneletNetwork([straight_lanelet(1, (-100, 0), (500, 0), 20.0)])
SC = Scenario("q", "", NET, (), problem(0, 0, 10, 0, rectangle_polygon(400, 0, 10, 10)))
L = SC.vehicle_parameters.length
OBS_L = 4.5


def quintic(x0, xT, T):
    h = xT - x0
    return np.array([x0, 0, 0, 10 * h / T**3, -15 * h / T**4, 6 * h / T**5])


def synthetic(rng, T=3.0, dt=0.1):
    """Polynomial speed, lateral offset and steering profiles plus a frontal
    obstacle driving at constant speed."""
    vc = quintic(*rng.uniform(5, 15, 2), T)
    d0 = rng.uniform(-0.3, 0.3)
    yc = quintic(d0, d0 + rng.uniform(1, 4) * rng.choice([-1, 1]), T)
    dc = quintic(0.0, rng.uniform(0.05, 0.3) * rng.choice([-1, 1]), T)
    xc = Pn.polyint(vc)
    gap, vo = rng.uniform(8, 25), rng.uniform(5, 15)
    t = np.arange(int(round(T / dt)) + 1) * dt
    states = np.column_stack([Pn.polyval(t, xc), Pn.polyval(t, yc), Pn.polyval(t, vc), np.zeros_like(t),
                              Pn.polyval(t, dc)])
    occ = Occupancy(1, 0, np.column_stack([gap + vo * t, 0 * t, 0 * t, np.full_like(t, vo)]), OBS_L, 1.8)
    return Trajectory.from_array(states), occ, (vc, yc, dc, xc, gap, vo, T)


def analytic_terms(params, h=1e-4):
    """Fine-resolution integrals of the analytic integrands."""
    vc, yc, dc, xc, gap, vo, T = params
    f = np.arange(0, T, h) + 0.5 * h
    jerk = Pn.polyval(f, Pn.polyder(vc, 2)) ** 2
    sr = Pn.polyval(f, Pn.polyder(dc)) ** 2
    dx = gap + vo * f - Pn.polyval(f, xc)
    dy = -Pn.polyval(f, yc)
    d = np.maximum(np.hypot(dx, dy) - 0.5 * (L + OBS_L), 0.0)
    prox = np.where(dx > 0, np.exp(-W_DIST * d), 0.0)
    lc = Pn.polyval(f, yc) ** 2
    return np.array([jerk.sum(), sr.sum(), prox.sum(), lc.sum()]) * h


def test_published_weights():
    assert WEIGHTS == (0.01, 22, 8, 5)
    assert W_DIST == 0.2


def test_zero_cost_trajectory():
    traj = Trajectory(tuple(VehicleState(10 * 0.1 * k, 0, 10, 0, 0) for k in range(40)))
    r = tr1_cost(traj, SC, occupancies=[])
    assert r.terms == (0.0, 0.0, 0.0, 0.0)
    assert r.J_ego == 0.0


def test_too_short():
    with pytest.raises(TrajectoryTooShort):
        tr1_cost(Trajectory(tuple(VehicleState(k, 0, 10, 0, 0) for k in range(3))), SC)


def test_touching_frontal_obstacle_for_one_step():
    traj = Trajectory(tuple(VehicleState(0.0, 0, 0, 0, 0) for _ in range(6)))
    # present at step 2 only, bumper to bumper
    occ = Occupancy(1, 2, np.array([[0.5 * (L + OBS_L), 0, 0, 0]]), OBS_L, 1.8)
    r = tr1_cost(traj, SC, occupancies=[occ])
    assert r.J_D == pytest.approx(0.1, abs=1e-15)


def test_five_metres_ahead():
    traj = Trajectory(tuple(VehicleState(0.0, 0, 0, 0, 0) for _ in range(11)))
    occ = Occupancy(1, 0, np.tile([5.0 + 0.5 * (L + OBS_L), 0, 0, 0], (11, 1)), OBS_L, 1.8)
    r = tr1_cost(traj, SC, occupancies=[occ])
    # exp(-0.2 * 5) per step over 1 s
    assert r.J_D == pytest.approx(0.367879441171442321595523770161, abs=1e-12)


def test_rear_obstacle_ignored():
    traj = Trajectory(tuple(VehicleState(0.0, 0, 0, 0, 0) for _ in range(5)))
    occ = Occupancy(1, 0, np.tile([-6.0, 0, 0, 0], (5, 1)), OBS_L, 1.8)
    assert tr1_cost(traj, SC, occupancies=[occ]).J_D == 0.0


def test_quadrature_matches_analytic_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        traj, occ, params = synthetic(rng)
        got = np.array(tr1_cost(traj, SC, occupancies=[occ]).terms)
        assert np.all(np.abs(got - analytic_terms(params)) <= 0.05 * analytic_terms(params))


def test_report_total_is_weighted_sum():
    r = CostReport(1.0, 2.0, 3.0, 4.0)
    assert r.J_ego == 0.01 * 1 + 22 * 2 + 8 * 3 + 5 * 4


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), dx=st.floats(-500, 500), dy=st.floats(-500, 500), rot=st.floats(-3.1, 3.1))
def test_rigid_transform_invariance(seed, dx, dy, rot):
    traj, occ, _ = synthetic(np.random.default_rng(seed))
    c, s = math.cos(rot), math.sin(rot)

    def tf(xy):
        xy = np.asarray(xy, float)
        return np.stack([c * xy[..., 0] - s * xy[..., 1] + dx, s * xy[..., 0] + c * xy[..., 1] + dy], axis=-1)

    ll = NET[1]
    moved_ll = straight_lanelet(1, tf(ll.centerline[0]), tf(ll.centerline[-1]), 20.0)
    sc2 = Scenario("q", "", LaneletNetwork([moved_ll]), (), SC.planning_problem)
    arr = traj.as_array()
    arr2 = arr.copy()
    arr2[:, :2] = tf(arr[:, :2])
    arr2[:, 3] += rot
    o2 = occ.states.copy()
    o2[:, :2] = tf(o2[:, :2])
    o2[:, 2] += rot
    a = tr1_cost(traj, SC, occupancies=[occ])
    b = tr1_cost(Trajectory.from_array(arr2), sc2, occupancies=[Occupancy(1, 0, o2, OBS_L, 1.8)])
    assert b.J_ego == pytest.approx(a.J_ego, rel=1e-6, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(d=st.floats(0, 40), extra=st.floats(0, 10))
def test_proximity_monotone_in_distance(d, extra):
    traj = Trajectory(tuple(VehicleState(0.0, 0, 0, 0, 0) for _ in range(6)))

    def jd(gap):
        occ = Occupancy(1, 0, np.tile([gap + 0.5 * (L + OBS_L), 0, 0, 0], (6, 1)), OBS_L, 1.8)
        return tr1_cost(traj, SC, occupancies=[occ]).J_D

    assert jd(d + extra) <= jd(d)
