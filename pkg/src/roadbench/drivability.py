"""Feasibility verdict: collision-free, kinematically feasible, road-compliant."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import shapely

from .dynamics import Trajectory, reconstruct_inputs
from .geometry import rectangle_corners, rectangles_overlap
from .prediction import Occupancy
from .scenario import LaneletNetwork, Scenario, VehicleParameters

RESIDUAL_TOL = 0.05
# slack for bounds hit exactly by clipped inputs
BOUND_TOL = 1e-9


@dataclass(frozen=True)
class CollisionResult:
    collision_free: bool
    step: Optional[int] = None
    obstacle_id: Optional[int] = None


@dataclass(frozen=True)
class KinematicsResult:
    feasible: bool
    step: Optional[int] = None
    bound: Optional[str] = None


@dataclass(frozen=True)
class RoadResult:
    compliant: bool
    step: Optional[int] = None


@dataclass(frozen=True)
class FeasibilityVerdict:
    collision: CollisionResult
    kinematics: KinematicsResult
    road: RoadResult

    @property
    def collision_free(self) -> bool:
        return self.collision.collision_free

    @property
    def kinematically_feasible(self) -> bool:
        return self.kinematics.feasible

    @property
    def road_compliant(self) -> bool:
        return self.road.compliant

    @property
    def feasible(self) -> bool:
        return self.collision_free and self.kinematically_feasible and self.road_compliant

    def reason(self) -> Optional[str]:
        if not self.collision_free:
            return "collision"
        if not self.kinematically_feasible:
            return f"kinematics:{self.kinematics.bound}"
        if not self.road_compliant:
            return "road"
        return None


def ego_corners(traj: Trajectory, ego_shape: tuple[float, float], margin: float = 0.0) -> np.ndarray:
    arr = traj.as_array()
    length, width = ego_shape
    return rectangle_corners(arr[:, 0], arr[:, 1], arr[:, 3], length + 2 * margin, width + 2 * margin)


def check_collision(traj: Trajectory, occupancies: Sequence[Occupancy], ego_shape: tuple[float, float],
                    margin: float = 0.0) -> CollisionResult:
    """Per-step oriented-rectangle overlap between the ego and each occupancy.

    Steps are matched by absolute time step. The earliest collision is
    reported; simultaneous ones resolve to the lowest obstacle id so the
    verdict does not depend on obstacle ordering.
    """
    corners = ego_corners(traj, ego_shape, margin)
    t0, t1 = traj.t0_step, traj.t0_step + len(traj) - 1
    first: Optional[tuple[int, int]] = None
    for occ in occupancies:
        w = occ.window(t0, t1)
        if len(w) == 0:
            continue
        i0 = w.t0_step - t0
        hit = rectangles_overlap(corners[i0:i0 + len(w)], w.corners)
        if hit.any():
            cand = (w.t0_step + int(np.argmax(hit)), occ.obstacle_id)
            if first is None or cand < first:
                first = cand
    if first is None:
        return CollisionResult(True)
    return CollisionResult(False, first[0], first[1])


def check_kinematics(traj: Trajectory, params: VehicleParameters, dt: float) -> KinematicsResult:
    """Bounds on reconstructed inputs and states plus the one-step residual."""
    if len(traj) < 2:
        raise ValueError("need at least two states")
    inputs, residuals = reconstruct_inputs(traj, dt, params)
    states = traj.as_array()
    for k in range(len(traj)):
        v, delta = states[k, 2], states[k, 4]
        if not params.v_min - BOUND_TOL <= v <= params.v_max + BOUND_TOL:
            return KinematicsResult(False, traj.t0_step + k, "v")
        if abs(delta) > params.delta_max + BOUND_TOL:
            return KinematicsResult(False, traj.t0_step + k, "delta")
        if k == len(inputs):
            break
        u = inputs[k]
        if abs(u.a) > params.a_max + BOUND_TOL:
            return KinematicsResult(False, traj.t0_step + k, "a")
        if abs(u.v_delta) > params.v_delta_max + BOUND_TOL:
            return KinematicsResult(False, traj.t0_step + k, "v_delta")
        if residuals[k] > RESIDUAL_TOL:
            return KinematicsResult(False, traj.t0_step + k, "residual")
    return KinematicsResult(True)


def off_road_mask(corners: np.ndarray, network: LaneletNetwork) -> np.ndarray:
    """True per footprint (``corners[..., 4, 2]``) that leaves the driving
    union or touches a walkway or bicycle lanelet."""
    shape = corners.shape[:-2]
    flat = corners.reshape(-1, 4, 2)
    inside = network.on_road(flat.reshape(-1, 2)).reshape(-1, 4).all(axis=1)
    bad = ~inside
    if network.non_driving_ids:
        footprints = shapely.polygons(flat)
        for lid in network.non_driving_ids:
            bad |= shapely.intersects(network[lid].polygon, footprints)
    return bad.reshape(shape)


def check_road_compliance(traj: Trajectory, network: LaneletNetwork,
                          ego_shape: tuple[float, float]) -> RoadResult:
    bad = off_road_mask(ego_corners(traj, ego_shape), network)
    if bad.any():
        return RoadResult(False, traj.t0_step + int(np.argmax(bad)))
    return RoadResult(True)


def check_feasibility(traj: Trajectory, occupancies: Sequence[Occupancy], scenario: Scenario,
                      params: Optional[VehicleParameters] = None, dt: Optional[float] = None) -> FeasibilityVerdict:
    params = scenario.vehicle_parameters if params is None else params
    dt = scenario.dt if dt is None else dt
    shape = (params.length, params.width)
    kin = check_kinematics(traj, params, dt) if len(traj) >= 2 else KinematicsResult(True)
    return FeasibilityVerdict(
        collision=check_collision(traj, occupancies, shape),
        kinematics=kin,
        road=check_road_compliance(traj, scenario.network, shape),
    )


def scenario_occupancies(scenario: Scenario, t_from: int, t_to: int) -> list[Occupancy]:
    """Occupancies of static and recorded obstacles over ``[t_from, t_to]``.

    Reactive agents are simulated and therefore not part of the scenario file's
    ground truth; the harness logs them separately.
    """
    out = []
    for o in scenario.obstacles:
        rows, steps = [], []
        for t in range(t_from, t_to + 1):
            s = o.state_at(t) if o.kind.value != "dynamic_reactive" else None
            if s is not None:
                rows.append((s.x, s.y, s.theta, s.v))
                steps.append(t)
        if rows:
            # recorded obstacles are contiguous by validation
            out.append(Occupancy(o.id, steps[0], np.array(rows, float), o.length, o.width))
    return out
