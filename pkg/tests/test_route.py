import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from make_corpus import W, intersection_lanelets, problem, two_lanes
from roadbench.route import NoRouteError, plan_route, shortest_lanelet_sequence, update_reference
from roadbench.route import LANE_CHANGE_PENALTY
from roadbench.scenario import (
    Adjacency,
    LaneletNetwork,
    Scenario,
    lanelet_from_centerline,
    rectangle_polygon,
    straight_lanelet,
)
from roadbench.states import VehicleState


def enumerate_costs(network, start, goals):
    """Every simple lanelet path from ``start`` to a goal with its cost."""
    out = []

    def walk(lid, seq, cost):
        if lid in goals:
            out.append((cost, tuple(seq)))
        ll = network[lid]
        steps = [(s, network[s].length) for s in ll.successors]
        steps += [(a.id, LANE_CHANGE_PENALTY) for a in (ll.adjacent_left, ll.adjacent_right)
                  if a is not None and a.same_direction]
        for nxt, c in steps:
            if nxt not in seq:
                walk(nxt, seq + [nxt], cost + c)

    walk(start, [start], network[start].length)
    return out


def test_single_lanelet_path_follows_centerline():
    net = LaneletNetwork([straight_lanelet(1, (0, 0), (100, 0), speed_limit=10.0)])
    sc = Scenario("s", "", net, (), problem(5, 0, 5, 0, rectangle_polygon(95, 0, 10, W)))
    path = plan_route(sc)
    assert np.abs(path.points[:, 1]).max() < 1e-9
    assert path.points[0, 0] <= 0 and path.points[-1, 0] >= 100
    assert np.abs(path.kappa).max() < 1e-9
    assert path.lanelet_ids == (1,)


def test_two_lanes_exactly_one_lane_change():
    net = LaneletNetwork(two_lanes())
    sc = Scenario("s", "", net, (), problem(10, 0, 10, 0, rectangle_polygon(170, W, 20, W)))
    path = plan_route(sc)
    assert path.transitions.count("lane_change") == 1
    costs = enumerate_costs(net, 1, {2})
    best = min(costs)
    _, _, cost = shortest_lanelet_sequence(net, {1}, {2})
    assert cost == pytest.approx(best[0])
    assert list(path.lanelet_ids) == list(best[1])


def test_disconnected_goal():
    net = LaneletNetwork([straight_lanelet(1, (0, 0), (100, 0)), straight_lanelet(2, (0, 50), (100, 50))])
    sc = Scenario("s", "", net, (), problem(5, 0, 5, 0, rectangle_polygon(90, 50, 10, W)))
    with pytest.raises(NoRouteError):
        plan_route(sc)


@st.composite
def graphs(draw):
    n = draw(st.integers(2, 8))
    lengths = draw(st.lists(st.floats(1, 100), min_size=n, max_size=n))
    succ = [draw(st.lists(st.integers(1, n), max_size=3, unique=True)) for _ in range(n)]
    left = [draw(st.one_of(st.none(), st.integers(1, n))) for _ in range(n)]
    lls = []
    for i in range(n):
        lid = i + 1
        adj = Adjacency(left[i], True) if left[i] not in (None, lid) else None
        lls.append(straight_lanelet(lid, (0, 10 * i), (lengths[i], 10 * i),
                                    successors=tuple(s for s in succ[i] if s != lid), adjacent_left=adj))
    goal = draw(st.integers(1, n))
    return LaneletNetwork(lls), goal


@settings(max_examples=200, deadline=None)
@given(g=graphs())
def test_route_cost_optimal_against_enumeration(g):
    net, goal = g
    costs = enumerate_costs(net, 1, {goal})
    if not costs:
        with pytest.raises(NoRouteError):
            shortest_lanelet_sequence(net, {1}, {goal})
        return
    _, _, cost = shortest_lanelet_sequence(net, {1}, {goal})
    assert cost == pytest.approx(min(costs)[0], rel=1e-12)


def arc_scenario(R=50.0, n=600):
    # chords well below the 1 m resampling spacing, so the polyline is a faithful arc
    ang = np.linspace(-math.pi / 2, math.pi / 2, n)
    c = np.stack([R * np.cos(ang), R * np.sin(ang)], axis=1)
    net = LaneletNetwork([lanelet_from_centerline(1, c, W, speed_limit=10.0)])
    i0, i1 = n // 40, n - n // 24
    return Scenario("arc", "", net, (), problem(c[i0, 0], c[i0, 1], 5, ang[i0] + math.pi / 2,
                                                 rectangle_polygon(c[i1, 0], c[i1, 1], 4, 4), 200))


def test_resampled_spacing_and_arc_curvature():
    path = plan_route(arc_scenario(50.0))
    chords = np.linalg.norm(np.diff(path.points, axis=0), axis=1)
    assert np.allclose(chords, 1.0, atol=1e-6)
    # away from the straight extensions and the smoothing transition
    inner = (path.s > 30) & (path.s < path.length - 70)
    assert inner.sum() > 50
    assert np.allclose(path.kappa[inner], 1 / 50.0, rtol=0.02)


def test_straight_curvature_is_zero(corpus_scenario):
    path = plan_route(corpus_scenario("01_straight"))
    assert np.abs(path.kappa).max() < 1e-9


def test_update_on_route_is_identity():
    net = LaneletNetwork(two_lanes())
    sc = Scenario("s", "", net, (), problem(10, 0, 10, 0, rectangle_polygon(170, 0, 20, W)))
    path = plan_route(sc)
    ego = VehicleState(50, 0.3, 10, 0)
    once = update_reference(path, ego, sc)
    assert once is path
    assert update_reference(once, ego, sc) is path


def test_update_after_drift_replans_from_new_lane():
    net = LaneletNetwork(two_lanes())
    sc = Scenario("s", "", net, (), problem(10, 0, 10, 0, rectangle_polygon(170, 0, 20, W)))
    path = plan_route(sc)
    assert path.lanelet_ids == (1,)
    drifted = VehicleState(60, W, 10, 0)
    new = update_reference(path, drifted, sc)
    assert new is not path
    assert new.lanelet_ids[0] == 2


def test_update_suppressed_inside_overlap():
    net = LaneletNetwork(intersection_lanelets())
    sc = Scenario("x", "", net, (), problem(-70, -W / 2, 10, 0, rectangle_polygon(50, -W / 2, 20, W)))
    path = plan_route(sc)
    # inside the crossing the eastbound and northbound lanelets overlap
    ego = VehicleState(W / 2, -W / 2 + 0.2, 8, math.pi / 2)
    from roadbench.scenario import lanelet_containing
    assert len({i for i in lanelet_containing(net, (ego.x, ego.y)) if net[i].is_driving}) > 1
    assert update_reference(path, ego, sc) is path
