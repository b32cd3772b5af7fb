"""Reference paths over the lanelet graph.

A route is the cheapest lanelet sequence from the ego's lanelet to a goal
lanelet, where following a successor costs the successor's centerline length
and a lane change to a same-direction neighbour costs a fixed penalty.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import shapely

from .geometry import (
    circumcircle_curvature,
    densify,
    moving_average,
    polyline_lengths,
    project_onto_polyline,
    resample_uniform,
)
from .scenario import LaneletNetwork, Scenario, lanelet_containing
from .states import VehicleState

LANE_CHANGE_PENALTY = 5.0
RESAMPLE_SPACING = 1.0
INTERSECTION_GUARD_DISTANCE = 20.0
BACK_EXTENSION = 20.0
FORWARD_EXTENSION = 60.0


class NoRouteError(RuntimeError):
    """The goal cannot be reached over the lanelet graph."""


@dataclass(frozen=True, eq=False)
class ReferencePath:
    points: np.ndarray
    s: np.ndarray
    kappa: np.ndarray
    speed_limit: np.ndarray
    # lanelet sequence the route was built from, in driving order
    lanelet_ids: tuple[int, ...] = ()
    # kind of transition into each lanelet: "start", "successor" or "lane_change"
    transitions: tuple[str, ...] = field(default=())

    @classmethod
    def from_polyline(cls, points, speed_limit=None, lanelet_ids=(), transitions=(),
                      spacing: float = RESAMPLE_SPACING, smooth: bool = True) -> "ReferencePath":
        raw = np.asarray(points, float)
        limits = np.full(len(raw), np.inf) if speed_limit is None else np.asarray(speed_limit, float)
        dense = densify(raw, 0.5 * spacing)
        if smooth:
            dense = moving_average(dense, 3)
        pts = resample_uniform(dense, spacing)
        if len(pts) < 2:
            raise ValueError("polyline shorter than the resampling spacing")
        # each resampled point inherits the limit of the nearest raw vertex
        nearest = np.argmin(((pts[:, None, :] - raw[None, :, :]) ** 2).sum(-1), axis=1)
        return cls(
            points=pts,
            s=polyline_lengths(pts),
            kappa=circumcircle_curvature(pts),
            speed_limit=limits[nearest],
            lanelet_ids=tuple(lanelet_ids),
            transitions=tuple(transitions),
        )

    @property
    def length(self) -> float:
        return float(self.s[-1])

    @cached_property
    def tangents(self) -> np.ndarray:
        """Unit tangents at the vertices (central differences)."""
        t = np.gradient(self.points, axis=0)
        return t / np.linalg.norm(t, axis=1, keepdims=True)

    @cached_property
    def headings(self) -> np.ndarray:
        return np.unwrap(np.arctan2(self.tangents[:, 1], self.tangents[:, 0]))

    @cached_property
    def geometry(self) -> shapely.LineString:
        return shapely.LineString(self.points)

    def _interp(self, values, s):
        return np.interp(s, self.s, values)

    def kappa_at(self, s):
        return self._interp(self.kappa, s)

    def heading_at(self, s):
        return self._interp(self.headings, s)

    def speed_limit_at(self, s):
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 1)
        return self.speed_limit[idx]

    def point_at(self, s):
        s = np.asarray(s, float)
        return np.stack([self._interp(self.points[:, 0], s), self._interp(self.points[:, 1], s)], axis=-1)


# ------------------------------------------------------------------ graph

def _neighbors(network: LaneletNetwork, lid: int):
    ll = network[lid]
    for s in ll.successors:
        if network[s].is_driving:
            yield s, network[s].length, "successor"
    for adj in (ll.adjacent_left, ll.adjacent_right):
        if adj is not None and adj.same_direction and network[adj.id].is_driving:
            yield adj.id, LANE_CHANGE_PENALTY, "lane_change"


def shortest_lanelet_sequence(network: LaneletNetwork, start_ids, goal_ids) -> tuple[list[int], list[str], float]:
    """Dijkstra over lanelets. Ties are broken by lanelet id for determinism."""
    goal_ids = set(goal_ids)
    heap = [(network[s].length, s, (s,), ("start",)) for s in sorted(start_ids)]
    heapq.heapify(heap)
    best: dict[int, float] = {}
    while heap:
        cost, lid, seq, trans = heapq.heappop(heap)
        if lid in best:
            continue
        best[lid] = cost
        if lid in goal_ids:
            return list(seq), list(trans), cost
        for nxt, c, kind in _neighbors(network, lid):
            if nxt not in best:
                heapq.heappush(heap, (cost + c, nxt, seq + (nxt,), trans + (kind,)))
    raise NoRouteError(f"no lanelet path from {sorted(start_ids)} to {sorted(goal_ids)}")


def _resample_fraction(line: np.ndarray, n: int) -> np.ndarray:
    """``n`` points at equal normalised arc length along ``line``."""
    cum = polyline_lengths(line)
    u = np.linspace(0.0, cum[-1], n)
    return np.stack([np.interp(u, cum, line[:, 0]), np.interp(u, cum, line[:, 1])], axis=1)


def _smoothstep(w):
    w = np.clip(w, 0.0, 1.0)
    return w * w * (3 - 2 * w)


def _lane_change_segment(first: np.ndarray, last: np.ndarray, u_start: float) -> np.ndarray:
    """Centerline blend from ``first`` to the parallel ``last``."""
    length = polyline_lengths(first)[-1]
    n = max(int(length / 0.5), 4)
    a = _resample_fraction(first, n)
    b = _resample_fraction(last, n)
    u = np.linspace(0.0, 1.0, n)
    remaining = (1.0 - u_start) * length
    blend_len = min(max(0.8 * remaining, min(20.0, remaining)), 50.0)
    w = _smoothstep((u - u_start) * length / max(blend_len, 1e-6))
    return (1 - w)[:, None] * a + w[:, None] * b


def _route_polyline(network: LaneletNetwork, seq: list[int], trans: list[str], start_point=None):
    """Concatenate centerlines, blending runs of lane changes."""
    groups: list[list[int]] = []
    for lid, kind in zip(seq, trans):
        if kind == "lane_change":
            groups[-1].append(lid)
        else:
            groups.append([lid])
    pieces, limits = [], []
    for gi, group in enumerate(groups):
        lls = [network[i] for i in group]
        limit = min((ll.speed_limit if ll.speed_limit is not None else math.inf) for ll in lls)
        if len(group) == 1:
            piece = np.asarray(lls[0].centerline, float)
        else:
            u_start = 0.0
            if gi == 0 and start_point is not None:
                cum = polyline_lengths(lls[0].centerline)
                s0 = shapely.LineString(lls[0].centerline).project(shapely.Point(start_point))
                u_start = float(np.clip(s0 / cum[-1], 0.0, 0.95))
            piece = _lane_change_segment(np.asarray(lls[0].centerline, float),
                                         np.asarray(lls[-1].centerline, float), u_start)
        if pieces and np.linalg.norm(pieces[-1][-1] - piece[0]) < 1e-6:
            piece = piece[1:]
        pieces.append(piece)
        limits.append(np.full(len(piece), limit))
    return np.vstack(pieces), np.concatenate(limits)


def _extend(network: LaneletNetwork, seq: list[int], pts: np.ndarray, limits: np.ndarray):
    """Add successors beyond the goal, a straight run-out and a back extension."""
    extra, extra_lim = [], []
    ahead = 0.0
    lid = seq[-1]
    visited = set(seq)
    while ahead < FORWARD_EXTENSION:
        succ = [s for s in network[lid].successors if network[s].is_driving and s not in visited]
        if not succ:
            break
        lid = min(succ)
        visited.add(lid)
        ll = network[lid]
        extra.append(np.asarray(ll.centerline, float)[1:])
        extra_lim.append(np.full(len(ll.centerline) - 1,
                                 ll.speed_limit if ll.speed_limit is not None else math.inf))
        ahead += ll.length
    if extra:
        pts = np.vstack([pts, *extra])
        limits = np.concatenate([limits, *extra_lim])
    d_end = pts[-1] - pts[-2]
    d_end /= np.linalg.norm(d_end)
    tail = pts[-1] + d_end * max(FORWARD_EXTENSION - ahead, 10.0)
    d_start = pts[1] - pts[0]
    d_start /= np.linalg.norm(d_start)
    head = pts[0] - d_start * BACK_EXTENSION
    pts = np.vstack([head, pts, tail])
    limits = np.concatenate([[limits[0]], limits, [limits[-1]]])
    return pts, limits


def path_from_lanelets(network: LaneletNetwork, seq: Sequence[int], trans: Optional[Sequence[str]] = None,
                       start_point=None) -> ReferencePath:
    trans = list(trans) if trans is not None else ["start"] + ["successor"] * (len(seq) - 1)
    pts, limits = _route_polyline(network, list(seq), trans, start_point)
    pts, limits = _extend(network, list(seq), pts, limits)
    return ReferencePath.from_polyline(pts, limits, lanelet_ids=seq, transitions=trans)


def _start_lanelets(network: LaneletNetwork, state: VehicleState) -> set[int]:
    ids = {i for i in lanelet_containing(network, (state.x, state.y)) if network[i].is_driving}
    if len(ids) > 1:
        # prefer lanelets whose direction matches the heading
        aligned = set()
        for i in ids:
            c = np.asarray(network[i].centerline)
            s, _, j = _nearest_segment(c, (state.x, state.y))
            e = c[j + 1] - c[j]
            if math.cos(math.atan2(e[1], e[0]) - state.phi) > 0.5:
                aligned.add(i)
        ids = aligned or ids
    return ids


def _nearest_segment(line, point):
    s, d, j = project_onto_polyline(np.asarray(point, float)[None], line)
    return float(s[0]), float(d[0]), int(j[0])


def goal_lanelets(scenario: Scenario) -> set[int]:
    """Driving lanelets sharing area with the goal region (touching is not enough)."""
    goal = scenario.planning_problem.goal_region.geometry
    return {ll.id for ll in scenario.network
            if ll.is_driving and ll.polygon.intersects(goal) and ll.polygon.intersection(goal).area > 1e-6}


def plan_route(scenario: Scenario, state: Optional[VehicleState] = None) -> ReferencePath:
    """Reference path from ``state`` (default: the initial state) to the goal."""
    network = scenario.network
    state = scenario.planning_problem.initial_state if state is None else state
    start = _start_lanelets(network, state)
    goals = goal_lanelets(scenario)
    if not start or not goals:
        raise NoRouteError("initial state or goal region is off the lanelet network")
    seq, trans, _ = shortest_lanelet_sequence(network, start, goals)
    return path_from_lanelets(network, seq, trans, start_point=(state.x, state.y))


# ------------------------------------------------------- intersection guard

def in_intersection_guard(network: LaneletNetwork, point, distance: float = INTERSECTION_GUARD_DISTANCE) -> bool:
    """Near a branching lanelet end, or where lanelet containment is ambiguous."""
    forks = network.fork_points
    p = np.asarray(point, float)
    if len(forks) and np.min(np.linalg.norm(forks - p, axis=1)) <= distance:
        return True
    ids = [i for i in lanelet_containing(network, p) if network[i].is_driving]
    return len(ids) > 1


def update_reference(path: ReferencePath, ego_state: VehicleState, scenario: Scenario) -> ReferencePath:
    """Re-plan from the ego's lanelet after it has left the routed lanes."""
    network = scenario.network
    p = (ego_state.x, ego_state.y)
    if in_intersection_guard(network, p):
        return path
    current = [i for i in lanelet_containing(network, p) if network[i].is_driving]
    if not current or set(current) & set(path.lanelet_ids):
        return path
    try:
        return plan_route(scenario, ego_state)
    except NoRouteError:
        return path
