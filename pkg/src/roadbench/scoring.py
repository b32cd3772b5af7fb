"""TR1 cost: longitudinal jerk, steering rate, obstacle proximity and
lane-center offset, integrated over the trajectory at its time step.

Per-sample integrands use trapezoid weights; the steering rate lives on the
intervals between samples and uses one rectangle per interval.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import shapely

from .drivability import scenario_occupancies
from .dynamics import Trajectory
from .prediction import Occupancy
from .scenario import LaneletNetwork, Scenario

WEIGHTS = (0.01, 22.0, 8.0, 5.0)
W_DIST = 0.2


class TrajectoryTooShort(ValueError):
    pass


@dataclass(frozen=True)
class CostReport:
    J_jerk: float
    J_SR: float
    J_D: float
    J_LC: float
    w: tuple[float, float, float, float] = field(default=WEIGHTS)
    w_dist: float = W_DIST

    @property
    def terms(self) -> tuple[float, float, float, float]:
        return (self.J_jerk, self.J_SR, self.J_D, self.J_LC)

    @property
    def J_ego(self) -> float:
        return float(sum(w * j for w, j in zip(self.w, self.terms)))


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def longitudinal_jerk(v: np.ndarray, dt: float) -> np.ndarray:
    """Jerk per sample from the third difference of the speed-integrated
    arc position, i.e. the central second difference of speed.
    Ends reuse their neighbour's value."""
    j = np.empty_like(v)
    j[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / dt**2
    j[0], j[-1] = j[1], j[-2]
    return j


def lane_center_offsets(points: np.ndarray, network: LaneletNetwork) -> np.ndarray:
    """Distance from each point to the centerline of the lanelet it occupies.

    With several containing lanelets the nearest centerline wins; off-road
    points use the nearest driving centerline.
    """
    pts = np.asarray(points, float).reshape(-1, 2)
    ids = network.driving_ids
    geoms = shapely.points(pts)
    dist = np.stack([shapely.distance(network[i].centerline_geom, geoms) for i in ids], axis=1)
    inside, _ = network.containment(pts, ids)
    masked = np.where(inside, dist, np.inf)
    any_inside = inside.any(axis=1)
    return np.where(any_inside, masked.min(axis=1), dist.min(axis=1))


def proximity_terms(states: np.ndarray, t0_step: int, occupancies: Sequence[Occupancy],
                    ego_length: float, w_dist: float = W_DIST) -> np.ndarray:
    """Per-step max of exp(-w_dist * d_i) over obstacles in front; 0 if none."""
    n = len(states)
    best = np.zeros(n)
    heading = np.stack([np.cos(states[:, 3]), np.sin(states[:, 3])], axis=1)
    for occ in occupancies:
        w = occ.window(t0_step, t0_step + n - 1)
        if len(w) == 0:
            continue
        i0 = w.t0_step - t0_step
        ego = states[i0:i0 + len(w)]
        rel = w.states[:, :2] - ego[:, :2]
        front = (rel * heading[i0:i0 + len(w)]).sum(1) > 0
        d = np.maximum(np.linalg.norm(rel, axis=1) - 0.5 * (ego_length + w.length), 0.0)
        xi = np.where(front, np.exp(-w_dist * d), 0.0)
        best[i0:i0 + len(w)] = np.maximum(best[i0:i0 + len(w)], xi)
    return best


def tr1_cost(traj: Trajectory, scenario: Scenario, dt: Optional[float] = None,
             occupancies: Optional[Sequence[Occupancy]] = None,
             lane_offsets: Optional[np.ndarray] = None) -> CostReport:
    """Cost report for a trajectory.

    ``occupancies`` default to the scenario's static and recorded obstacles.
    ``lane_offsets`` may carry precomputed lane-center distances.
    """
    dt = scenario.dt if dt is None else dt
    n = len(traj)
    if n < 4:
        raise TrajectoryTooShort(f"need at least 4 states, got {n}")
    arr = traj.as_array()
    if occupancies is None:
        occupancies = scenario_occupancies(scenario, traj.t0_step, traj.t0_step + n - 1)

    jerk = longitudinal_jerk(arr[:, 2], dt)
    v_delta = np.diff(arr[:, 4]) / dt
    if lane_offsets is None:
        lane_offsets = lane_center_offsets(arr[:, :2], scenario.network)
    prox = proximity_terms(arr, traj.t0_step, occupancies, scenario.vehicle_parameters.length)

    w = trapezoid_weights(n, dt)
    return CostReport(
        J_jerk=float(w @ jerk**2),
        J_SR=float(np.sum(v_delta**2) * dt),
        J_D=float(w @ prox),
        J_LC=float(w @ np.asarray(lane_offsets, float) ** 2),
    )
