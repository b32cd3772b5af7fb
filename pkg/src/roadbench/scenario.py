"""Scenario data model, JSON file format (``.rbs``) and validation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import shapely

from .geometry import make_polygon, points_in_polygon, polygon_is_simple
from .states import PredState, VehicleState


class ParseError(ValueError):
    """The file is not valid JSON or misses required structure."""


class ValidationError(ValueError):
    """A type invariant or id reference does not hold."""

    def __init__(self, message: str, element_id=None):
        super().__init__(message if element_id is None else f"{message} (id {element_id})")
        self.element_id = element_id


class LaneType(str, Enum):
    DRIVING = "driving"
    WALKWAY = "walkway"
    BICYCLE = "bicycle"


class ObstacleKind(str, Enum):
    STATIC = "static"
    DYNAMIC_RECORDED = "dynamic_recorded"
    DYNAMIC_REACTIVE = "dynamic_reactive"


@dataclass(frozen=True)
class Adjacency:
    id: int
    same_direction: bool = True


@dataclass(frozen=True, eq=False)
class Lanelet:
    id: int
    left_bound: np.ndarray
    right_bound: np.ndarray
    centerline: np.ndarray
    lane_type: LaneType = LaneType.DRIVING
    successors: tuple[int, ...] = ()
    predecessors: tuple[int, ...] = ()
    adjacent_left: Optional[Adjacency] = None
    adjacent_right: Optional[Adjacency] = None
    speed_limit: Optional[float] = None

    @cached_property
    def polygon_vertices(self) -> np.ndarray:
        return np.vstack([self.left_bound, self.right_bound[::-1]])

    @cached_property
    def polygon(self) -> shapely.Polygon:
        return make_polygon(self.polygon_vertices)

    @cached_property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.centerline, axis=0), axis=1).sum())

    @cached_property
    def centerline_geom(self) -> shapely.LineString:
        line = shapely.LineString(self.centerline)
        shapely.prepare(line)
        return line

    @property
    def is_driving(self) -> bool:
        return self.lane_type == LaneType.DRIVING


@dataclass(frozen=True)
class RecordedState:
    t_step: int
    x: float
    y: float
    theta: float
    v: float


@dataclass(frozen=True)
class Obstacle:
    id: int
    length: float
    width: float
    kind: ObstacleKind
    recorded_trajectory: Optional[tuple[RecordedState, ...]] = None
    initial_state: Optional[PredState] = None
    # reactive agents follow this lanelet sequence
    route: Optional[tuple[int, ...]] = None
    desired_velocity: Optional[float] = None

    @property
    def is_dynamic(self) -> bool:
        return self.kind != ObstacleKind.STATIC

    def state_at(self, t_step: int) -> Optional[PredState]:
        """Recorded or static state at ``t_step``; None when absent."""
        if self.kind == ObstacleKind.STATIC:
            return self.initial_state
        if self.kind == ObstacleKind.DYNAMIC_RECORDED:
            rec = self.recorded_trajectory
            i = t_step - rec[0].t_step
            if 0 <= i < len(rec):
                r = rec[i]
                return PredState(r.x, r.y, r.v, r.theta)
            return None
        # reactive agents are simulated by the harness
        return self.initial_state if t_step == 0 else None


@dataclass(frozen=True, eq=False)
class GoalRegion:
    polygon: np.ndarray
    time_step: tuple[int, int]
    velocity: Optional[tuple[float, float]] = None

    @cached_property
    def geometry(self) -> shapely.Polygon:
        return make_polygon(self.polygon)

    @property
    def centroid(self) -> tuple[float, float]:
        c = self.geometry.centroid
        return (c.x, c.y)


@dataclass(frozen=True)
class PlanningProblem:
    initial_state: VehicleState
    goal_region: GoalRegion
    time_step: float = 0.1
    max_time_steps: int = 150


@dataclass(frozen=True)
class VehicleParameters:
    wheelbase: float = 2.9
    length: float = 4.3
    width: float = 1.7
    v_max: float = 45.8
    v_min: float = -13.9
    a_max: float = 11.5
    delta_max: float = 0.91
    v_delta_max: float = 0.4


class LaneletNetwork:
    """Immutable collection of lanelets with spatial lookups."""

    def __init__(self, lanelets: Iterable[Lanelet]):
        self._lanelets = {ll.id: ll for ll in lanelets}
        self.ids = tuple(sorted(self._lanelets))

    def __getitem__(self, lanelet_id: int) -> Lanelet:
        return self._lanelets[lanelet_id]

    def __iter__(self):
        return (self._lanelets[i] for i in self.ids)

    def __len__(self):
        return len(self._lanelets)

    def __contains__(self, lanelet_id) -> bool:
        return lanelet_id in self._lanelets

    @cached_property
    def driving_ids(self) -> tuple[int, ...]:
        return tuple(i for i in self.ids if self._lanelets[i].is_driving)

    @cached_property
    def non_driving_ids(self) -> tuple[int, ...]:
        return tuple(i for i in self.ids if not self._lanelets[i].is_driving)

    def containment(self, points, ids: Optional[Iterable[int]] = None) -> tuple[np.ndarray, tuple[int, ...]]:
        """Boolean matrix ``(n_points, n_lanelets)`` and the column ids."""
        pts = np.asarray(points, float).reshape(-1, 2)
        ids = self.ids if ids is None else tuple(ids)
        out = np.zeros((len(pts), len(ids)), dtype=bool)
        for j, lid in enumerate(ids):
            out[:, j] = points_in_polygon(self._lanelets[lid].polygon, pts)
        return out, ids

    def on_road(self, points) -> np.ndarray:
        """True where a point lies inside some driving lanelet."""
        m, _ = self.containment(points, self.driving_ids)
        return m.any(axis=1) if m.shape[1] else np.zeros(len(m), dtype=bool)

    @cached_property
    def fork_points(self) -> np.ndarray:
        """End points of driving lanelets with two or more successors."""
        pts = [self._lanelets[i].centerline[-1] for i in self.driving_ids
               if len(self._lanelets[i].successors) >= 2]
        return np.array(pts, float).reshape(-1, 2)

    def successor_closure(self, lanelet_id: int, depth: int = 3) -> frozenset[int]:
        seen = {lanelet_id}
        frontier = [lanelet_id]
        for _ in range(depth):
            nxt = []
            for lid in frontier:
                for s in self._lanelets[lid].successors:
                    if s not in seen:
                        seen.add(s)
                        nxt.append(s)
            frontier = nxt
        return frozenset(seen)


@dataclass(frozen=True, eq=False)
class Scenario:
    id: str
    cluster: str
    network: LaneletNetwork
    obstacles: tuple[Obstacle, ...]
    planning_problem: PlanningProblem
    vehicle_parameters: VehicleParameters = field(default_factory=VehicleParameters)

    @property
    def lanelets(self) -> tuple[Lanelet, ...]:
        return tuple(self.network)

    @property
    def dt(self) -> float:
        return self.planning_problem.time_step

    def obstacle(self, obstacle_id: int) -> Obstacle:
        for o in self.obstacles:
            if o.id == obstacle_id:
                return o
        raise KeyError(obstacle_id)


# ---------------------------------------------------------------- queries

def lanelet_containing(network: LaneletNetwork, point) -> set[int]:
    """Ids of all lanelets whose polygon contains ``point`` (inclusive)."""
    m, ids = network.containment(np.asarray(point, float).reshape(1, 2))
    return {lid for lid, inside in zip(ids, m[0]) if inside}


def goal_reached(problem: PlanningProblem, state: VehicleState, t: int) -> bool:
    goal = problem.goal_region
    lo, hi = goal.time_step
    if not lo <= t <= hi:
        return False
    if goal.velocity is not None:
        vlo, vhi = goal.velocity
        if not vlo <= state.v <= vhi:
            return False
    return bool(points_in_polygon(goal.geometry, [[state.x, state.y]])[0])


# ---------------------------------------------------------------- parsing

def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ParseError(f"missing key '{key}' in {where}")
    return d[key]


def _polyline(value, where: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: not a list of points") from exc
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ParseError(f"{where}: expected a list of [x, y] points")
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{where}: non-finite coordinate")
    arr.setflags(write=False)
    return arr


def _adjacency(value) -> Optional[Adjacency]:
    if value is None:
        return None
    return Adjacency(int(_require(value, "id", "adjacency")), bool(value.get("same_direction", True)))


def _lanelet(d: dict) -> Lanelet:
    lid = int(_require(d, "id", "lanelet"))
    left = _polyline(_require(d, "left_bound", f"lanelet {lid}"), f"lanelet {lid} left_bound")
    right = _polyline(_require(d, "right_bound", f"lanelet {lid}"), f"lanelet {lid} right_bound")
    if len(left) < 2 or len(right) < 2:
        raise ValidationError("bounds need at least 2 vertices", lid)
    if len(left) != len(right):
        raise ValidationError("left and right bound vertex counts differ", lid)
    mid = 0.5 * (left + right)
    if d.get("centerline") is not None:
        center = _polyline(d["centerline"], f"lanelet {lid} centerline")
        if center.shape != mid.shape or np.max(np.abs(center - mid)) > 1e-6:
            raise ValidationError("centerline is not the midpoint of the bounds", lid)
    else:
        center = mid
        center.setflags(write=False)
    try:
        lane_type = LaneType(d.get("lane_type", "driving"))
    except ValueError as exc:
        raise ParseError(f"lanelet {lid}: unknown lane_type {d.get('lane_type')!r}") from exc
    speed = d.get("speed_limit")
    ll = Lanelet(
        id=lid,
        left_bound=left,
        right_bound=right,
        centerline=center,
        lane_type=lane_type,
        successors=tuple(int(s) for s in d.get("successors", ())),
        predecessors=tuple(int(s) for s in d.get("predecessors", ())),
        adjacent_left=_adjacency(d.get("adjacent_left")),
        adjacent_right=_adjacency(d.get("adjacent_right")),
        speed_limit=None if speed is None else float(speed),
    )
    if not polygon_is_simple(ll.polygon_vertices):
        raise ValidationError("lanelet polygon self-intersects", lid)
    if ll.speed_limit is not None and ll.speed_limit <= 0:
        raise ValidationError("speed_limit must be positive", lid)
    return ll


def _pred_state(d: dict, where: str) -> PredState:
    return PredState(
        float(_require(d, "x", where)),
        float(_require(d, "y", where)),
        float(d.get("v", 0.0)),
        float(d.get("theta", 0.0)),
    )


def _obstacle(d: dict) -> Obstacle:
    oid = int(_require(d, "id", "obstacle"))
    shape = _require(d, "shape", f"obstacle {oid}")
    try:
        kind = ObstacleKind(_require(d, "kind", f"obstacle {oid}"))
    except ValueError as exc:
        raise ParseError(f"obstacle {oid}: unknown kind {d.get('kind')!r}") from exc
    length = float(_require(shape, "length", f"obstacle {oid} shape"))
    width = float(_require(shape, "width", f"obstacle {oid} shape"))
    if not (length > 0 and width > 0):
        raise ValidationError("obstacle length and width must be positive", oid)
    rec = d.get("recorded_trajectory")
    if (rec is not None) != (kind == ObstacleKind.DYNAMIC_RECORDED):
        raise ValidationError("recorded_trajectory present iff kind is dynamic_recorded", oid)
    recorded = None
    if rec is not None:
        if not rec:
            raise ValidationError("recorded_trajectory is empty", oid)
        recorded = tuple(
            RecordedState(
                int(_require(r, "t_step", f"obstacle {oid} record")),
                float(_require(r, "x", "record")),
                float(_require(r, "y", "record")),
                float(r.get("theta", 0.0)),
                float(r.get("v", 0.0)),
            )
            for r in rec
        )
        steps = np.array([r.t_step for r in recorded])
        if np.any(np.diff(steps) != 1):
            raise ValidationError("recorded time steps must increase by exactly one", oid)
    init = d.get("initial_state")
    initial = None if init is None else _pred_state(init, f"obstacle {oid} initial_state")
    if kind != ObstacleKind.DYNAMIC_RECORDED and initial is None:
        raise ValidationError("initial_state required for static and reactive obstacles", oid)
    route = d.get("route")
    dv = d.get("desired_velocity")
    return Obstacle(
        id=oid,
        length=length,
        width=width,
        kind=kind,
        recorded_trajectory=recorded,
        initial_state=initial,
        route=None if route is None else tuple(int(r) for r in route),
        desired_velocity=None if dv is None else float(dv),
    )


def _vehicle_state(d: dict) -> VehicleState:
    where = "planning_problem initial_state"
    return VehicleState(
        float(_require(d, "x", where)),
        float(_require(d, "y", where)),
        float(_require(d, "v", where)),
        float(_require(d, "phi", where)),
        float(d.get("delta", 0.0)),
    )


def _is_convex(poly: np.ndarray) -> bool:
    p = np.asarray(poly)
    e = np.roll(p, -1, axis=0) - p
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    cross = cross[np.abs(cross) > 1e-12]
    return bool(np.all(cross > 0) or np.all(cross < 0))


def _planning_problem(d: dict) -> PlanningProblem:
    init = _vehicle_state(_require(d, "initial_state", "planning_problem"))
    g = _require(d, "goal_region", "planning_problem")
    poly = _polyline(_require(g, "polygon", "goal_region"), "goal_region polygon")
    dt = float(d.get("time_step", 0.1))
    max_steps = int(_require(d, "max_time_steps", "planning_problem"))
    ts = g.get("time_step", [0, max_steps])
    vel = g.get("velocity")
    goal = GoalRegion(
        polygon=poly,
        time_step=(int(ts[0]), int(ts[1])),
        velocity=None if vel is None else (float(vel[0]), float(vel[1])),
    )
    if len(poly) < 3 or not _is_convex(poly):
        raise ValidationError("goal region must be a convex polygon", "goal_region")
    if not dt > 0:
        raise ValidationError("time_step must be positive", "planning_problem")
    lo, hi = goal.time_step
    if not 0 <= lo <= hi <= max_steps:
        raise ValidationError("goal time interval outside [0, max_time_steps]", "goal_region")
    return PlanningProblem(init, goal, dt, max_steps)


def _vehicle_parameters(d: Optional[dict]) -> VehicleParameters:
    if not d:
        return VehicleParameters()
    names = VehicleParameters.__dataclass_fields__
    unknown = set(d) - set(names)
    if unknown:
        raise ParseError(f"unknown vehicle parameter(s): {sorted(unknown)}")
    p = VehicleParameters(**{k: float(v) for k, v in d.items()})
    positive = [p.wheelbase, p.length, p.width, p.v_max, p.a_max, p.delta_max, p.v_delta_max]
    if not all(x > 0 for x in positive):
        raise ValidationError("vehicle bounds must be strictly positive", "vehicle_parameters")
    if not p.v_min <= 0 <= p.v_max:
        raise ValidationError("need v_min <= 0 <= v_max", "vehicle_parameters")
    return p


def scenario_from_dict(data: dict) -> Scenario:
    """Build and validate a scenario from parsed JSON."""
    meta = _require(data, "meta", "scenario")
    try:
        lanelets = [_lanelet(d) for d in _require(data, "lanelets", "scenario")]
        obstacles = tuple(_obstacle(d) for d in data.get("obstacles", []))
        problem = _planning_problem(_require(data, "planning_problem", "scenario"))
    except (TypeError, AttributeError) as exc:
        raise ParseError(f"malformed scenario: {exc}") from exc
    params = _vehicle_parameters(data.get("vehicle_parameters"))

    ids = [ll.id for ll in lanelets]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValidationError("duplicate lanelet id", dup)
    known = set(ids)
    for ll in lanelets:
        refs = [*ll.successors, *ll.predecessors]
        refs += [a.id for a in (ll.adjacent_left, ll.adjacent_right) if a is not None]
        for r in refs:
            if r not in known:
                raise ValidationError(f"lanelet {ll.id} references unknown lanelet {r}", r)
    oids = [o.id for o in obstacles]
    if len(set(oids)) != len(oids):
        raise ValidationError("duplicate obstacle id", next(i for i in oids if oids.count(i) > 1))
    for o in obstacles:
        for r in o.route or ():
            if r not in known:
                raise ValidationError(f"obstacle {o.id} route references unknown lanelet {r}", r)

    init = problem.initial_state
    if abs(init.delta) > params.delta_max or not params.v_min <= init.v <= params.v_max:
        raise ValidationError("initial state violates vehicle bounds", "initial_state")

    return Scenario(
        id=str(_require(meta, "id", "meta")),
        cluster=str(meta.get("cluster", "")),
        network=LaneletNetwork(lanelets),
        obstacles=obstacles,
        planning_problem=problem,
        vehicle_parameters=params,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return scenario_from_dict(data)


# ---------------------------------------------------------------- writing

def _state_dict(nt) -> dict:
    return {k: float(v) for k, v in nt._asdict().items()}


def scenario_to_dict(scenario: Scenario) -> dict:
    def adj(a: Optional[Adjacency]):
        return None if a is None else {"id": a.id, "same_direction": a.same_direction}

    lanelets = [
        {
            "id": ll.id,
            "left_bound": ll.left_bound.tolist(),
            "right_bound": ll.right_bound.tolist(),
            "centerline": ll.centerline.tolist(),
            "lane_type": ll.lane_type.value,
            "successors": list(ll.successors),
            "predecessors": list(ll.predecessors),
            "adjacent_left": adj(ll.adjacent_left),
            "adjacent_right": adj(ll.adjacent_right),
            "speed_limit": ll.speed_limit,
        }
        for ll in scenario.network
    ]
    obstacles = []
    for o in scenario.obstacles:
        d = {"id": o.id, "shape": {"length": o.length, "width": o.width}, "kind": o.kind.value}
        if o.recorded_trajectory is not None:
            d["recorded_trajectory"] = [
                {"t_step": r.t_step, "x": r.x, "y": r.y, "theta": r.theta, "v": r.v}
                for r in o.recorded_trajectory
            ]
        if o.initial_state is not None:
            d["initial_state"] = _state_dict(o.initial_state)
        if o.route is not None:
            d["route"] = list(o.route)
        if o.desired_velocity is not None:
            d["desired_velocity"] = o.desired_velocity
        obstacles.append(d)
    pp = scenario.planning_problem
    goal = pp.goal_region
    return {
        "meta": {"id": scenario.id, "cluster": scenario.cluster},
        "lanelets": lanelets,
        "obstacles": obstacles,
        "planning_problem": {
            "initial_state": _state_dict(pp.initial_state),
            "goal_region": {
                "polygon": goal.polygon.tolist(),
                "time_step": list(goal.time_step),
                "velocity": None if goal.velocity is None else list(goal.velocity),
            },
            "time_step": pp.time_step,
            "max_time_steps": pp.max_time_steps,
        },
        "vehicle_parameters": {k: getattr(scenario.vehicle_parameters, k)
                               for k in VehicleParameters.__dataclass_fields__},
    }


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=1) + "\n", encoding="utf-8")


def straight_lanelet(lanelet_id: int, start, end, width: float = 3.5, n: int = 2, **kwargs) -> Lanelet:
    """Rectangular lanelet from ``start`` to ``end`` (centerline endpoints)."""
    center = np.linspace(np.asarray(start, float), np.asarray(end, float), n)
    return lanelet_from_centerline(lanelet_id, center, width, **kwargs)


def lanelet_from_centerline(lanelet_id: int, center, width: float = 3.5, **kwargs) -> Lanelet:
    """Lanelet of constant width around a centerline polyline."""
    c = np.asarray(center, float)
    t = np.gradient(c, axis=0)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    normal = np.stack([-t[:, 1], t[:, 0]], axis=1) * (0.5 * width)
    left, right = c + normal, c - normal
    return Lanelet(id=lanelet_id, left_bound=_ro(left), right_bound=_ro(right),
                   centerline=_ro(0.5 * (left + right)), **kwargs)


def _ro(a) -> np.ndarray:
    a = np.array(a, float)
    a.setflags(write=False)
    return a


def arc_centerline(center, radius: float, start_angle: float, sweep: float, n: int = 60) -> np.ndarray:
    """Points on a circular arc, counter-clockwise for positive ``sweep``."""
    ang = start_angle + np.linspace(0.0, sweep, n)
    return np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)


def rectangle_polygon(cx: float, cy: float, length: float, width: float, theta: float = 0.0) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    pts = []
    for lx, ly in ((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)):
        x, y = lx * length, ly * width
        pts.append([cx + x * c - y * s, cy + x * s + y * c])
    return np.array(pts)
