"""Quantitative robustness of the safe-distance (G1) and traffic-flow (G4) rules.

Both rules are of the "always" kind, so robustness is the minimum of the
per-step margin over the monitored steps and +inf when nothing is monitored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import Trajectory
from .prediction import Occupancy
from .scenario import LaneletNetwork, Scenario, VehicleParameters

T_REACT = 0.3
T_C = 3.0
SUCCESSOR_DEPTH = 3


@dataclass(frozen=True)
class Leader:
    obstacle_id: int
    gap: float
    v: float


@dataclass(frozen=True)
class G1State:
    """Carry-over between evaluations: last leader and remaining grace steps."""

    leader_id: Optional[int] = None
    grace_steps: int = 0


@dataclass(frozen=True)
class RuleRobustness:
    rho_g1: float
    rho_g4: float
    cut_in_grace_steps: int = 0
    state: G1State = G1State()


class LeaderContext:
    """Lanelet memberships shared by every candidate of one planning cycle."""

    def __init__(self, network: LaneletNetwork, occupancies: Sequence[Occupancy]):
        self.network = network
        self.occupancies = list(occupancies)
        self.ids = network.driving_ids
        self._closure: dict[int, frozenset[int]] = {}
        self._occ_members = []
        for occ in self.occupancies:
            if len(occ):
                m, _ = network.containment(occ.states[:, :2], self.ids)
            else:
                m = np.zeros((0, len(self.ids)), dtype=bool)
            self._occ_members.append(m)

    def closure(self, lid: int) -> frozenset[int]:
        c = self._closure.get(lid)
        if c is None:
            c = self._closure[lid] = self.network.successor_closure(lid, SUCCESSOR_DEPTH)
        return c

    def lane_sequence_mask(self, member_row: np.ndarray) -> np.ndarray:
        """Column mask of lanelets reachable from the ego's current lanelets."""
        reach: set[int] = set()
        for j in np.flatnonzero(member_row):
            reach |= self.closure(self.ids[j])
        return np.array([i in reach for i in self.ids], dtype=bool)

    def leaders(self, ego: np.ndarray, t0_step: int, ego_length: float,
                ego_members: Optional[np.ndarray] = None) -> list[Optional[Leader]]:
        """Closest obstacle ahead on the ego's lane sequence, per ego state.

        ``ego`` is an ``(n, 5)`` state array starting at ``t0_step``.
        """
        n = len(ego)
        if ego_members is None:
            ego_members, _ = self.network.containment(ego[:, :2], self.ids)
        out: list[Optional[Leader]] = [None] * n
        if not self.occupancies or not len(self.ids):
            return out
        for k in range(n):
            if not ego_members[k].any():
                continue
            mask = self.lane_sequence_mask(ego_members[k])
            t = t0_step + k
            c, s = math.cos(ego[k, 3]), math.sin(ego[k, 3])
            best = None
            for occ, members in zip(self.occupancies, self._occ_members):
                i = t - occ.t0_step
                if not 0 <= i < len(occ) or not (members[i] & mask).any():
                    continue
                st = occ.states[i]
                proj = (st[0] - ego[k, 0]) * c + (st[1] - ego[k, 1]) * s
                if proj <= 0:
                    continue
                if best is None or proj < best[0]:
                    best = (proj, occ)
            if best is not None:
                proj, occ = best
                out[k] = Leader(occ.obstacle_id, proj - 0.5 * (ego_length + occ.length), float(occ.at(t)[3]))
        return out


def safe_gap(v_ego: float, v_lead: float, a_brake: float, t_react: float = T_REACT) -> float:
    return v_ego * t_react + v_ego**2 / (2 * a_brake) - v_lead**2 / (2 * a_brake)


def evaluate_g1(ego_traj: Trajectory, leaders: Sequence[Optional[Leader]], params: VehicleParameters,
                dt: float, t_c: float = T_C, state: G1State = G1State()) -> RuleRobustness:
    """Safe-distance robustness with the cut-in grace window.

    A cut-in is a change of leader while the new gap is already below the safe
    gap; the following ``t_c`` seconds (including the cut-in step) are exempt.
    """
    n_grace = int(round(t_c / dt))
    rho = math.inf
    prev, grace = state.leader_id, state.grace_steps
    for st, lead in zip(ego_traj.states, leaders):
        if lead is None:
            prev = None
            if grace:
                grace -= 1
            continue
        margin = lead.gap - safe_gap(st.v, lead.v, params.a_max)
        if lead.obstacle_id != prev and margin < 0:
            grace = n_grace
        if grace:
            grace -= 1
        else:
            rho = min(rho, margin)
        prev = lead.obstacle_id
    return RuleRobustness(rho, math.inf, grace, G1State(prev, grace))


def robustness_g1(ego_traj: Trajectory, predictions: Sequence[Occupancy], scenario: Scenario,
                  params: Optional[VehicleParameters] = None, t_c: float = T_C,
                  state: G1State = G1State(), context: Optional[LeaderContext] = None) -> float:
    params = scenario.vehicle_parameters if params is None else params
    context = LeaderContext(scenario.network, predictions) if context is None else context
    leaders = context.leaders(ego_traj.as_array(), ego_traj.t0_step, params.length)
    return evaluate_g1(ego_traj, leaders, params, scenario.dt, t_c, state).rho_g1


def evaluate_g4(ego_traj: Trajectory, leaders: Sequence[Optional[Leader]], v_limit) -> float:
    v = ego_traj.as_array()[:, 2]
    limit = np.broadcast_to(np.asarray(v_limit, float), v.shape)
    monitored = np.array([lead is None for lead in leaders], dtype=bool)
    if not monitored.any():
        return math.inf
    return float(np.min(v[monitored] - limit[monitored]))


def robustness_g4(ego_traj: Trajectory, scenario: Scenario, v_limit,
                  predictions: Sequence[Occupancy] = (), context: Optional[LeaderContext] = None) -> float:
    """Traffic-flow robustness: ``v - v_limit`` on steps without a leader.

    The recommended speed is taken to be the limit itself.
    """
    context = LeaderContext(scenario.network, predictions) if context is None else context
    leaders = context.leaders(ego_traj.as_array(), ego_traj.t0_step, scenario.vehicle_parameters.length)
    return evaluate_g4(ego_traj, leaders, v_limit)
