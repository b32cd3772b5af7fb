"""Sampling planner in the Frenet frame of a reference path.

Each cycle samples lateral quintics and longitudinal velocity-keeping quartics,
turns every (d(t), s(t)) pair into a single-track rollout that tracks it, drops
candidates that fail a feasibility screen and returns the cheapest survivor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .drivability import BOUND_TOL, RESIDUAL_TOL, check_feasibility, off_road_mask
from .dynamics import Trajectory
from .geometry import rectangle_corners, rectangles_overlap, wrap_angle
from .prediction import Occupancy, horizon_steps
from .route import INTERSECTION_GUARD_DISTANCE, ReferencePath, in_intersection_guard
from .rules import G1State, LeaderContext, evaluate_g1, evaluate_g4
from .scenario import Scenario, VehicleParameters
from .scoring import CostReport, lane_center_offsets, tr1_cost
from .states import VehicleState


class ProjectionError(ValueError):
    """The point projects beyond an end of the reference path."""


class NoFeasibleCandidate(RuntimeError):
    pass


class FrenetState(NamedTuple):
    s: float
    s_d: float
    s_dd: float
    d: float
    d_d: float
    d_dd: float


@dataclass(frozen=True)
class PlannerConfig:
    horizon_s: float = 3.0
    replan_interval_s: float = 0.3
    reduced_interval_s: float = 0.1
    d_samples: tuple[float, ...] = tuple(np.linspace(-2.0, 2.0, 7).tolist())
    v_offsets: tuple[float, ...] = (-2.5, -1.25, 0.0, 1.25, 2.5)
    t_samples: tuple[float, ...] = (1.5, 2.25, 3.0)
    kappa_hr: float = 0.05
    d_hr: float = 10.0
    intersection_distance: float = INTERSECTION_GUARD_DISTANCE
    a_lat_max: float = 2.0
    w_rule: float = 10.0
    # pulls the end speed toward the admissible target speed
    w_velocity: float = 0.5
    t_c: float = 3.0
    # footprint inflation used only while planning
    collision_margin: float = 0.25
    lookahead_time: float = 0.8
    lookahead_min: float = 3.0


@dataclass(eq=False)
class CandidateTrajectory:
    index: int
    lat_coeffs: np.ndarray
    lon_coeffs: np.ndarray
    T: float
    # (N + 1, 6) columns s, s_d, s_dd, d, d_d, d_dd
    frenet: np.ndarray
    trajectory: Optional[Trajectory] = None
    cost: float = math.inf
    feasible: bool = True
    reason: Optional[str] = None
    report: Optional[CostReport] = None
    extra: dict = field(default_factory=dict)


# ----------------------------------------------------------- frame transforms

def _frame(path: ReferencePath, j: int, u: float):
    """Point, unit tangent and curvature at parameter ``u`` of segment ``j``."""
    p0, p1 = path.points[j], path.points[j + 1]
    t = (1 - u) * path.tangents[j] + u * path.tangents[j + 1]
    t = t / np.linalg.norm(t)
    kappa = (1 - u) * path.kappa[j] + u * path.kappa[j + 1]
    return p0 + u * (p1 - p0), t, kappa


def _project(path: ReferencePath, p: np.ndarray) -> tuple[int, float]:
    """Segment and parameter whose interpolated normal passes through ``p``.

    Tangents are blended linearly along each segment, so the foot point solves
    a quadratic in the segment parameter; this makes the transform exactly
    invertible.
    """
    pts, tan = path.points, path.tangents
    n_seg = len(pts) - 1
    j0 = int(np.argmin(np.linalg.norm(pts - p, axis=1)))
    best = None
    for j in range(max(j0 - 2, 0), min(j0 + 2, n_seg)):
        e = pts[j + 1] - pts[j]
        r = p - pts[j]
        dt = tan[j + 1] - tan[j]
        qa, qb, qc = -(e @ dt), r @ dt - e @ tan[j], r @ tan[j]
        if abs(qa) < 1e-12:
            roots = [-qc / qb] if abs(qb) > 1e-15 else []
        else:
            disc = qb * qb - 4 * qa * qc
            if disc < 0:
                continue
            sq = math.sqrt(disc)
            roots = [(-qb + sq) / (2 * qa), (-qb - sq) / (2 * qa)]
        for u in roots:
            if -1e-9 <= u <= 1 + 1e-9:
                u = min(max(u, 0.0), 1.0)
                c = pts[j] + u * e
                dist = float(np.linalg.norm(p - c))
                if best is None or dist < best[0]:
                    best = (dist, j, u)
    if best is None:
        raise ProjectionError(f"point {p.tolist()} projects beyond the reference path")
    return best[1], best[2]


def cartesian_to_frenet_point(path: ReferencePath, x: float, y: float):
    """``(s, d, theta_ref, kappa_ref)`` of a point; d is positive to the left."""
    p = np.array([x, y], float)
    j, u = _project(path, p)
    c, t, kappa = _frame(path, j, u)
    n = np.array([-t[1], t[0]])
    s = path.s[j] + u * (path.s[j + 1] - path.s[j])
    return float(s), float((p - c) @ n), math.atan2(t[1], t[0]), float(kappa)


def frenet_to_cartesian_point(path: ReferencePath, s, d):
    """Positions, reference headings and curvatures for arrays of ``(s, d)``."""
    s = np.asarray(s, float)
    d = np.asarray(d, float)
    j = np.clip(np.searchsorted(path.s, s, side="right") - 1, 0, len(path.s) - 2)
    seg = path.s[j + 1] - path.s[j]
    u = ((s - path.s[j]) / seg)[..., None]
    t = (1 - u) * path.tangents[j] + u * path.tangents[j + 1]
    t = t / np.linalg.norm(t, axis=-1, keepdims=True)
    c = path.points[j] + u * (path.points[j + 1] - path.points[j])
    n = np.stack([-t[..., 1], t[..., 0]], axis=-1)
    kappa = (1 - u[..., 0]) * path.kappa[j] + u[..., 0] * path.kappa[j + 1]
    return c + d[..., None] * n, np.arctan2(t[..., 1], t[..., 0]), kappa


def to_frenet(path: ReferencePath, state: VehicleState, a: float = 0.0,
              params: Optional[VehicleParameters] = None) -> FrenetState:
    """Frenet state of a vehicle; ``a`` is its current acceleration.

    Second derivatives ignore the change of path curvature along s.
    """
    wheelbase = params.wheelbase if params is not None else 2.9
    s, d, theta_r, kappa_r = cartesian_to_frenet_point(path, state.x, state.y)
    dth = float(wrap_angle(state.phi - theta_r))
    v = state.v
    one = 1.0 - kappa_r * d
    s_d = v * math.cos(dth) / one
    d_d = v * math.sin(dth)
    kappa_v = math.tan(state.delta) / wheelbase
    dth_d = v * kappa_v - kappa_r * s_d
    d_dd = a * math.sin(dth) + v * math.cos(dth) * dth_d
    s_dd = ((a * math.cos(dth) - v * math.sin(dth) * dth_d) * one + v * math.cos(dth) * kappa_r * d_d) / one**2
    return FrenetState(s, s_d, s_dd, d, d_d, d_dd)


def from_frenet(path: ReferencePath, fs, dt: float = 0.1, wheelbase: float = 2.9,
                t0_step: int = 0) -> Trajectory:
    """Cartesian states of a Frenet sample sequence (pure geometry).

    Steering angles follow from successive heading changes.
    """
    arr = np.atleast_2d(np.asarray(fs, float))
    s, s_d, d, d_d = arr[:, 0], arr[:, 1], arr[:, 3], arr[:, 4]
    pos, theta_r, kappa = frenet_to_cartesian_point(path, s, d)
    along = s_d * (1 - kappa * d)
    phi = theta_r + np.arctan2(d_d, along)
    v = np.hypot(along, d_d)
    delta = np.zeros(len(arr))
    if len(arr) > 1:
        rate = np.diff(np.unwrap(phi)) / dt
        moving = v[:-1] > 0.1
        delta[:-1] = np.where(moving, np.arctan(rate * wheelbase / np.where(moving, v[:-1], 1.0)), 0.0)
        delta[-1] = delta[-2]
    states = np.column_stack([pos[:, 0], pos[:, 1], v, phi, delta])
    return Trajectory.from_array(states, t0_step)


# ---------------------------------------------------------------- polynomials

def quintic_coefficients(x0, v0, a0, xT, vT, aT, T: float) -> np.ndarray:
    """``c[0..5]`` of x(t) = sum c_i t^i meeting position, rate and
    acceleration at both ends."""
    h = xT - x0 - v0 * T - 0.5 * a0 * T**2
    g = vT - v0 - a0 * T
    q = aT - a0
    c3 = (10 * h - 4 * g * T + 0.5 * q * T**2) / T**3
    c4 = (-15 * h + 7 * g * T - q * T**2) / T**4
    c5 = (6 * h - 3 * g * T + 0.5 * q * T**2) / T**5
    return np.array([x0, v0, 0.5 * a0, c3, c4, c5])


def quartic_coefficients(x0, v0, a0, vT, aT, T: float) -> np.ndarray:
    """Velocity keeping: free end position, fixed end rate and acceleration."""
    g = vT - v0 - a0 * T
    q = aT - a0
    c4 = (0.5 * q * T - g) / (2 * T**3)
    c3 = (q - 12 * c4 * T**2) / (6 * T)
    return np.array([x0, v0, 0.5 * a0, c3, c4])


def poly_derivatives(c: np.ndarray, t: np.ndarray, order: int = 2) -> np.ndarray:
    """Values and derivatives up to ``order``, shape ``(order + 1, len(t))``."""
    out = []
    cur = np.asarray(c, float)
    for _ in range(order + 1):
        out.append(np.polynomial.polynomial.polyval(t, cur))
        cur = np.polynomial.polynomial.polyder(cur) if len(cur) > 1 else np.zeros(1)
    return np.array(out)


def _sample(c: np.ndarray, T: float, t: np.ndarray, hold_rate: bool) -> np.ndarray:
    """Sample on ``t``; past ``T`` hold position (lateral) or rate (longitudinal)."""
    vals = poly_derivatives(c, np.minimum(t, T))
    late = t > T
    if late.any():
        end = poly_derivatives(c, np.array([T]))[:, 0]
        if hold_rate:
            vals[0, late] = end[0] + end[1] * (t[late] - T)
            vals[1, late] = end[1]
        else:
            vals[0, late] = end[0]
            vals[1, late] = 0.0
        vals[2, late] = 0.0
    return vals


def generate_candidates(fs0: FrenetState, config: PlannerConfig = PlannerConfig(),
                        v_limit: float = math.inf, dt: float = 0.1) -> list[CandidateTrajectory]:
    """Lateral x velocity x end-time grid, enumerated in that nesting order."""
    n = horizon_steps(config.horizon_s, dt)
    t = np.arange(n + 1) * dt
    out = []
    for d_end in config.d_samples:
        for dv in config.v_offsets:
            v_end = min(max(fs0.s_d + dv, 0.0), v_limit)
            for T in config.t_samples:
                lat = quintic_coefficients(fs0.d, fs0.d_d, fs0.d_dd, d_end, 0.0, 0.0, T)
                lon = quartic_coefficients(fs0.s, fs0.s_d, fs0.s_dd, v_end, 0.0, T)
                dv_ = _sample(lat, T, t, hold_rate=False)
                sv = _sample(lon, T, t, hold_rate=True)
                frenet = np.column_stack([sv[0], sv[1], sv[2], dv_[0], dv_[1], dv_[2]])
                out.append(CandidateTrajectory(len(out), lat, lon, T, frenet))
    return out


# ------------------------------------------------------------------ tracking

def track_references(ego: VehicleState, ref_xy: np.ndarray, ref_v: np.ndarray, dt: float,
                     params: VehicleParameters, config: PlannerConfig = PlannerConfig()) -> np.ndarray:
    """Single-track rollouts following each reference, shape ``(C, N + 1, 5)``.

    Speed follows the reference one step ahead; steering is pure pursuit on a
    point a speed-dependent distance ahead along the reference. Inputs are
    clipped to the vehicle bounds, so every rollout is admissible.
    """
    C, M0, _ = ref_xy.shape
    n = M0 - 1
    # straight run-out so the look-ahead point always exists
    tail_dir = ref_xy[:, -1] - ref_xy[:, -2]
    norm = np.linalg.norm(tail_dir, axis=1, keepdims=True)
    fallback = np.array([math.cos(ego.phi), math.sin(ego.phi)])
    tail_dir = np.where(norm > 1e-9, tail_dir / np.maximum(norm, 1e-12), fallback)
    ext = ref_xy[:, -1:, :] + tail_dir[:, None, :] * np.arange(1, 31)[None, :, None]
    ref = np.concatenate([ref_xy, ext], axis=1)
    cum = np.concatenate([np.zeros((C, 1)), np.cumsum(np.linalg.norm(np.diff(ref, axis=1), axis=2), axis=1)], axis=1)
    rows = np.arange(C)

    out = np.empty((C, n + 1, 5))
    out[:, 0] = ego
    L = params.wheelbase
    for k in range(n):
        x, y, v, phi, delta = (out[:, k, i] for i in range(5))
        a = np.clip((np.maximum(ref_v[:, k + 1], 0.0) - v) / dt, -params.a_max, params.a_max)

        p = out[:, k, :2]
        j = np.argmin(np.linalg.norm(ref - p[:, None, :], axis=2), axis=1)
        ld = np.maximum(config.lookahead_min, config.lookahead_time * np.abs(v))
        target_s = cum[rows, j] + ld
        idx = np.clip((cum < target_s[:, None]).sum(axis=1), 1, cum.shape[1] - 1)
        s0, s1 = cum[rows, idx - 1], cum[rows, idx]
        w = np.clip((target_s - s0) / np.maximum(s1 - s0, 1e-9), 0.0, 1.0)
        target = ref[rows, idx - 1] + w[:, None] * (ref[rows, idx] - ref[rows, idx - 1])
        rel = target - p
        dist = np.linalg.norm(rel, axis=1)
        alpha = np.arctan2(rel[:, 1], rel[:, 0]) - phi
        delta_des = np.where(dist > 1e-3, np.arctan(2 * L * np.sin(alpha) / np.maximum(dist, 1e-3)), delta)
        v_delta = np.clip((delta_des - delta) / dt, -params.v_delta_max, params.v_delta_max)

        out[:, k + 1, 0] = x + v * np.cos(phi) * dt
        out[:, k + 1, 1] = y + v * np.sin(phi) * dt
        out[:, k + 1, 3] = phi + (v / L) * np.tan(delta) * dt
        out[:, k + 1, 2] = np.clip(v + a * dt, params.v_min, params.v_max)
        out[:, k + 1, 4] = np.clip(delta + v_delta * dt, -params.delta_max, params.delta_max)
    return out


def realize_candidates(candidates: Sequence[CandidateTrajectory], path: ReferencePath, ego: VehicleState,
                       params: VehicleParameters, dt: float, t0_step: int = 0,
                       config: PlannerConfig = PlannerConfig()) -> None:
    """Attach a tracked Cartesian trajectory to every candidate."""
    if not candidates:
        return
    fr = np.stack([c.frenet for c in candidates])
    pos, _, kappa = frenet_to_cartesian_point(path, fr[..., 0], fr[..., 3])
    v_ref = np.hypot(fr[..., 1] * (1 - kappa * fr[..., 3]), fr[..., 4])
    rolled = track_references(ego, pos, v_ref, dt, params, config)
    for c, arr in zip(candidates, rolled):
        c.trajectory = Trajectory.from_array(arr, t0_step)


# ----------------------------------------------------------------- selection

def kinematic_violation_mask(states: np.ndarray, params: VehicleParameters, dt: float) -> np.ndarray:
    """Batch form of the input-reconstruction check for ``states[C, n, 5]``."""
    x, y, v, phi, delta = (states[..., i] for i in range(5))
    a = np.diff(v, axis=1) / dt
    vd = np.diff(delta, axis=1) / dt
    px = x[:, :-1] + v[:, :-1] * np.cos(phi[:, :-1]) * dt
    py = y[:, :-1] + v[:, :-1] * np.sin(phi[:, :-1]) * dt
    res = np.hypot(px - x[:, 1:], py - y[:, 1:])
    bad = (np.abs(a) > params.a_max + BOUND_TOL).any(1)
    bad |= (np.abs(vd) > params.v_delta_max + BOUND_TOL).any(1)
    bad |= (res > RESIDUAL_TOL).any(1)
    bad |= ((v < params.v_min - BOUND_TOL) | (v > params.v_max + BOUND_TOL)).any(1)
    bad |= (np.abs(delta) > params.delta_max + BOUND_TOL).any(1)
    return bad


def _collision_mask(states: np.ndarray, t0_step: int, predictions: Sequence[Occupancy],
                    shape: tuple[float, float], margin: float) -> np.ndarray:
    C, n, _ = states.shape
    corners = rectangle_corners(states[..., 0], states[..., 1], states[..., 3],
                                shape[0] + 2 * margin, shape[1] + 2 * margin)
    hit = np.zeros(C, dtype=bool)
    for occ in predictions:
        w = occ.window(t0_step, t0_step + n - 1)
        if len(w) == 0:
            continue
        i0 = w.t0_step - t0_step
        hit |= rectangles_overlap(corners[:, i0:i0 + len(w)], w.corners[None]).any(axis=1)
    return hit


def _screen_violation(values: np.ndarray, limit: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Exceeding ``limit`` is tolerated only on steps where speed is falling."""
    over = values > limit + 1e-6
    falling = np.zeros_like(over)
    falling[:, :-1] = np.diff(v, axis=1) < 0
    return (over & ~falling).any(axis=1)


def target_speed(path: ReferencePath, s0: float, v0: float, params: VehicleParameters,
                 config: PlannerConfig = PlannerConfig()) -> float:
    """Speed limit capped by the curvature bound over the stretch ahead."""
    reach = max(v0, 5.0) * config.horizon_s + 10.0
    s = np.linspace(s0, min(s0 + reach, path.length), 50)
    kappa = np.max(np.abs(path.kappa_at(s)))
    v_curve = math.sqrt(config.a_lat_max / kappa) if kappa > 1e-9 else math.inf
    limit = float(path.speed_limit_at(s0))
    return min(limit, v_curve, params.v_max)


def select_trajectory(candidates: Sequence[CandidateTrajectory], scenario: Scenario,
                      predictions: Sequence[Occupancy], rules_monitor: G1State = G1State(), *,
                      path: ReferencePath, config: PlannerConfig = PlannerConfig(),
                      v_target: Optional[float] = None) -> CandidateTrajectory:
    """Feasibility filter, then the minimum of TR1 + rule + speed terms.

    Candidates must carry trajectories (see ``realize_candidates``). Every
    candidate gets its ``feasible``/``reason``/``cost`` fields filled in.
    """
    if not candidates:
        raise NoFeasibleCandidate("no candidates")
    params = scenario.vehicle_parameters
    dt = scenario.dt
    shape = (params.length, params.width)
    t0 = candidates[0].trajectory.t0_step
    states = np.stack([c.trajectory.as_array() for c in candidates])
    fr = np.stack([c.frenet for c in candidates])
    C, n, _ = states.shape

    kappa = np.abs(path.kappa_at(fr[..., 0]))
    limits = np.minimum(path.speed_limit_at(fr[..., 0]), params.v_max)
    reasons: list[Optional[str]] = [None] * C

    def reject(mask, why):
        for i in np.flatnonzero(mask):
            if reasons[i] is None:
                reasons[i] = why

    reject(kinematic_violation_mask(states, params, dt), "kinematics")
    reject(_screen_violation(states[..., 2], limits, states[..., 2]), "speed_limit")
    reject(_screen_violation(fr[..., 1] ** 2 * kappa, np.full_like(kappa, config.a_lat_max), states[..., 2]),
           "curvature")
    reject(_collision_mask(states, t0, predictions, shape, config.collision_margin), "collision")
    alive = np.array([r is None for r in reasons])
    if alive.any():
        corners = rectangle_corners(states[alive, :, 0], states[alive, :, 1], states[alive, :, 3], *shape)
        off = np.zeros(C, dtype=bool)
        off[alive] = off_road_mask(corners, scenario.network).any(axis=1)
        reject(off, "road")

    survivors = [i for i in range(C) if reasons[i] is None]
    for c, r in zip(candidates, reasons):
        c.feasible, c.reason, c.cost = r is None, r, math.inf
    if not survivors:
        raise NoFeasibleCandidate("all candidates rejected")

    if v_target is None:
        v_target = target_speed(path, float(fr[0, 0, 0]), float(states[0, 0, 2]), params, config)
    g4_limit = float(np.min(limits[0, :1]))
    context = LeaderContext(scenario.network, predictions)
    pts = states[survivors][..., :2].reshape(-1, 2)
    offsets = lane_center_offsets(pts, scenario.network).reshape(len(survivors), n)
    members, _ = scenario.network.containment(pts, context.ids)
    members = members.reshape(len(survivors), n, -1)

    for row, i in enumerate(survivors):
        c = candidates[i]
        report = tr1_cost(c.trajectory, scenario, dt, occupancies=predictions, lane_offsets=offsets[row])
        future = Trajectory(c.trajectory.states[1:], t0 + 1)
        leaders = context.leaders(states[i, 1:], t0 + 1, params.length, members[row, 1:])
        g1 = evaluate_g1(future, leaders, params, dt, config.t_c, rules_monitor)
        g4 = evaluate_g4(future, leaders, g4_limit)
        speed_term = config.w_velocity * (fr[i, -1, 1] - v_target) ** 2
        c.report = report
        c.extra = {"rho_g1": g1.rho_g1, "rho_g4": g4, "speed_term": speed_term}
        c.cost = (report.J_ego + config.w_rule * max(0.0, -g1.rho_g1)
                  + config.w_rule * max(0.0, -g4) + speed_term)

    # stable sort keeps the lowest index among equal costs
    for i in sorted(survivors, key=lambda i: candidates[i].cost):
        verdict = check_feasibility(candidates[i].trajectory, predictions, scenario)
        if verdict.feasible:
            return candidates[i]
        candidates[i].feasible, candidates[i].reason = False, verdict.reason()
    raise NoFeasibleCandidate("no candidate passed the final check")


# ---------------------------------------------------------------- scheduling

def next_replan_interval(state: VehicleState, scenario: Scenario, config: PlannerConfig = PlannerConfig(),
                         path: Optional[ReferencePath] = None, obstacle_positions=None) -> float:
    """Shorter interval on sharp curves, near obstacles and near intersections.

    ``obstacle_positions`` defaults to the scenario's obstacles at step 0.
    """
    p = np.array([state.x, state.y])
    if path is not None:
        try:
            s, *_ = cartesian_to_frenet_point(path, state.x, state.y)
            if abs(float(path.kappa_at(s))) > config.kappa_hr:
                return config.reduced_interval_s
        except ProjectionError:
            pass
    if obstacle_positions is None:
        obstacle_positions = [(o.state_at(0).x, o.state_at(0).y) for o in scenario.obstacles
                              if o.state_at(0) is not None]
    obs = np.asarray(obstacle_positions, float).reshape(-1, 2)
    if len(obs) and np.min(np.linalg.norm(obs - p, axis=1)) < config.d_hr:
        return config.reduced_interval_s
    if in_intersection_guard(scenario.network, p, config.intersection_distance):
        return config.reduced_interval_s
    return config.replan_interval_s


def plan_frenet(ego: VehicleState, t0_step: int, scenario: Scenario, path: ReferencePath,
                predictions: Sequence[Occupancy], config: PlannerConfig = PlannerConfig(),
                rule_state: G1State = G1State(), acceleration: float = 0.0) -> CandidateTrajectory:
    """One planning cycle from the current ego state."""
    params = scenario.vehicle_parameters
    fs0 = to_frenet(path, ego, acceleration, params)
    v_limit = min(float(path.speed_limit_at(fs0.s)), params.v_max)
    candidates = generate_candidates(fs0, config, v_limit, scenario.dt)
    realize_candidates(candidates, path, ego, params, scenario.dt, t0_step, config)
    return select_trajectory(candidates, scenario, predictions, rule_state, path=path, config=config)


__all__ = [
    "CandidateTrajectory",
    "FrenetState",
    "NoFeasibleCandidate",
    "PlannerConfig",
    "ProjectionError",
    "cartesian_to_frenet_point",
    "from_frenet",
    "frenet_to_cartesian_point",
    "generate_candidates",
    "next_replan_interval",
    "plan_frenet",
    "quartic_coefficients",
    "quintic_coefficients",
    "realize_candidates",
    "select_trajectory",
    "to_frenet",
]
