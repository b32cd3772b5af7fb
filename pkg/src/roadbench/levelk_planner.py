"""Level-k intersection planner over a discrete maneuver set.

Every agent chooses among all maneuver sequences of the game horizon. A
level-0 agent treats the others as frozen at their current inputs, a level-k
agent assumes everybody else plays their level-(k-1) best response. The ego
weighs the responses of each other agent by its belief over their level.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
import shapely

from .drivability import check_feasibility
from .dynamics import Trajectory, emergency_braking
from .geometry import project_onto_polyline, rectangle_corners, rectangles_overlap, wrap_angle
from .prediction import Occupancy, PredInput, PredState, predict_state
from .scenario import Scenario
from .states import VehicleState


class Maneuver(NamedTuple):
    index: int
    name: str
    a: float
    omega: float


MANEUVERS: tuple[Maneuver, ...] = (
    Maneuver(1, "Maintain", 0.0, 0.0),
    Maneuver(2, "Small deceleration", -1.5, 0.0),
    Maneuver(3, "Small acceleration", 1.5, 0.0),
    Maneuver(4, "Medium deceleration", -3.5, 0.0),
    Maneuver(5, "Large acceleration", 2.5, 0.0),
    Maneuver(6, "Large deceleration", -5.0, 0.0),
    Maneuver(7, "Small steering to the left", 0.0, math.pi / 4),
    Maneuver(8, "Small steering to the right", 0.0, -math.pi / 4),
    Maneuver(9, "Large steering to the left", 0.0, math.pi / 2),
    Maneuver(10, "Large steering to the right", 0.0, -math.pi / 2),
    Maneuver(11, "Acceleration and steering to the left", 1.5, math.pi / 4),
    Maneuver(12, "Acceleration and steering to the right", 1.5, -math.pi / 4),
    Maneuver(13, "Braking and steering to the left", -1.5, math.pi / 4),
    Maneuver(14, "Braking and steering to the right", -1.5, -math.pi / 4),
)
_INPUTS = np.array([(m.a, m.omega) for m in MANEUVERS])

LEVELS = (0, 1, 2)
SAFE_DISTANCE_SCALE = 0.5
TIE_RTOL = 1e-9
BELIEF_KEEP = 0.8


@dataclass(frozen=True)
class ActionSequence:
    maneuvers: tuple[Maneuver, ...]

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(m.index for m in self.maneuvers)

    def __len__(self):
        return len(self.maneuvers)


def enumerate_sequences(T_g: int) -> list[tuple[int, ...]]:
    """Zero-based maneuver positions, lexicographic with position 0 most significant."""
    return list(itertools.product(range(len(MANEUVERS)), repeat=T_g))


def sequence_from_position(pos: int, T_g: int) -> ActionSequence:
    digits = []
    for _ in range(T_g):
        pos, r = divmod(pos, len(MANEUVERS))
        digits.append(r)
    return ActionSequence(tuple(MANEUVERS[i] for i in reversed(digits)))


@dataclass(frozen=True)
class Belief:
    p: tuple[float, float, float]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if len(p) != 3 or min(p) < 0 or abs(sum(p) - 1.0) > 1e-12:
            raise ValueError(f"not a distribution over three levels: {p}")
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls) -> "Belief":
        return cls((1 / 3, 1 / 3, 1 / 3))

    @classmethod
    def one_hot(cls, k: int) -> "Belief":
        return cls(tuple(1.0 if i == k else 0.0 for i in LEVELS))


@dataclass(frozen=True)
class RewardWeights:
    w1: float = 1000.0
    w2: float = 50.0
    w3: float = 200.0
    w4: float = 100.0
    w5: float = 10.0

    def __post_init__(self):
        if min(self.as_tuple()) < 0:
            raise ValueError("reward weights must be non-negative")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.w1, self.w2, self.w3, self.w4, self.w5)


@dataclass(frozen=True, eq=False)
class Agent:
    """A participant of the game with its own lane and progress target."""

    id: int
    state: PredState
    length: float
    width: float
    # lanelets the agent is supposed to drive on
    lane_ids: tuple[int, ...]
    # centerline the progress term is measured along
    path: np.ndarray
    target_s: float
    inputs: PredInput = PredInput(0.0, 0.0)


@dataclass(frozen=True)
class LevelKConfig:
    T_g: int = 3
    dt_action: float = 1.0
    weights: RewardWeights = field(default_factory=RewardWeights)
    max_others: int = 2
    interaction_radius: float = 60.0


def argmax_last(values: np.ndarray, rtol: float = TIE_RTOL) -> int:
    """Index of the maximum; among (numerically) equal maxima the last one."""
    values = np.asarray(values, float)
    m = values.max()
    tol = rtol * max(1.0, abs(m))
    return int(np.flatnonzero(values >= m - tol)[-1])


# ------------------------------------------------------------------- rollouts

def rollout_sequence(initial: PredState, gamma, dt_action: float = 1.0, dt: float = 0.1) -> list[PredState]:
    """Apply each maneuver for one decision step, sub-stepped at ``dt``."""
    n_sub = int(round(dt_action / dt))
    states = [PredState(*initial)]
    for m in (gamma.maneuvers if isinstance(gamma, ActionSequence) else gamma):
        u = PredInput(m.a, m.omega)
        for _ in range(n_sub):
            states.append(predict_state(states[-1], u, dt))
    return states


def rollout_all(initial: PredState, T_g: int, dt_action: float, dt: float) -> np.ndarray:
    """Rollouts of every sequence, shape ``(14**T_g, T_g*n_sub + 1, 4)`` with
    columns x, y, theta, v (same arithmetic as ``predict_state``)."""
    n_sub = int(round(dt_action / dt))
    seqs = np.array(enumerate_sequences(T_g), dtype=int).reshape(-1, T_g)
    S = len(seqs)
    out = np.empty((S, T_g * n_sub + 1, 4))
    x = np.full(S, float(initial.x))
    y = np.full(S, float(initial.y))
    v = np.full(S, float(initial.v))
    th = np.full(S, float(initial.theta))
    out[:, 0] = np.stack([x, y, th, v], axis=1)
    k = 0
    for step in range(T_g):
        a = _INPUTS[seqs[:, step], 0]
        om = _INPUTS[seqs[:, step], 1]
        for _ in range(n_sub):
            x, y, v, th = x + v * np.cos(th) * dt, y + v * np.sin(th) * dt, np.maximum(v + a * dt, 0.0), th + om * dt
            k += 1
            out[:, k] = np.stack([x, y, th, v], axis=1)
    return out


def constant_rollout(initial: PredState, u: PredInput, n_steps: int, dt: float) -> np.ndarray:
    states = [initial]
    for _ in range(n_steps):
        states.append(predict_state(states[-1], u, dt))
    return np.array([[s.x, s.y, s.theta, s.v] for s in states])


# -------------------------------------------------------------------- reward

def _lane_checks(agent: Agent, pts: np.ndarray, theta: np.ndarray, scenario: Scenario):
    """Off-road flag and lane/direction flag per point."""
    net = scenario.network
    off = ~net.on_road(pts)
    ok = np.zeros(len(pts), dtype=bool)
    lanes = [i for i in agent.lane_ids if i in net]
    if lanes:
        inside, _ = net.containment(pts, lanes)
        for j, lid in enumerate(lanes):
            c = np.asarray(net[lid].centerline)
            _, _, seg = project_onto_polyline(pts, c)
            e = c[seg + 1] - c[seg]
            dev = np.abs(wrap_angle(theta - np.arctan2(e[:, 1], e[:, 0])))
            ok |= inside[:, j] & (dev <= math.pi / 2)
    return off, ~ok


def _progress_deficit(agent: Agent, pts: np.ndarray) -> np.ndarray:
    line = shapely.LineString(agent.path)
    s0 = shapely.line_locate_point(line, shapely.points(agent.state.x, agent.state.y))
    initial = max(agent.target_s - float(s0), 0.0)
    s = shapely.line_locate_point(line, shapely.points(pts))
    remaining = np.maximum(agent.target_s - s, 0.0)
    return remaining / initial if initial > 1e-9 else np.zeros(len(pts))


class Interaction(NamedTuple):
    """Per decision step: any overlap, minimum center distance."""

    collide: np.ndarray
    d_min: np.ndarray


def interaction_terms(ego_roll: np.ndarray, ego_shape, other_roll: np.ndarray, other_shape,
                      n_sub: int) -> Interaction:
    """``ego_roll`` is ``(S, n, 4)``; ``other_roll`` is ``(n, 4)``."""
    S, n, _ = ego_roll.shape
    T_g = (n - 1) // n_sub
    dist = np.linalg.norm(ego_roll[:, 1:, :2] - other_roll[None, 1:, :2], axis=2)
    # only pairs within the sum of circumradii can overlap
    reach = 0.5 * (math.hypot(*ego_shape) + math.hypot(*other_shape))
    near = dist <= reach + 1e-9
    hit = np.zeros_like(near)
    if near.any():
        si, ki = np.nonzero(near)
        e = ego_roll[si, ki + 1]
        o = other_roll[ki + 1]
        ec = rectangle_corners(e[:, 0], e[:, 1], e[:, 2], *ego_shape)
        oc = rectangle_corners(o[:, 0], o[:, 1], o[:, 2], *other_shape)
        hit[si, ki] = rectangles_overlap(ec, oc)
    return Interaction(hit.reshape(S, T_g, n_sub).any(axis=2), dist.reshape(S, T_g, n_sub).min(axis=2))


def static_reward(agent: Agent, rolls: np.ndarray, scenario: Scenario, weights: RewardWeights,
                  n_sub: int) -> np.ndarray:
    """Off-road, lane and progress terms, evaluated at decision-step ends."""
    ends = rolls[:, n_sub::n_sub]
    S, T_g, _ = ends.shape
    pts = ends[..., :2].reshape(-1, 2)
    off, bad_lane = _lane_checks(agent, pts, ends[..., 2].reshape(-1), scenario)
    deficit = _progress_deficit(agent, pts)
    o = -off.reshape(S, T_g).sum(axis=1)
    lane = -bad_lane.reshape(S, T_g).sum(axis=1)
    d = -deficit.reshape(S, T_g).sum(axis=1)
    return weights.w3 * o + weights.w4 * lane + weights.w5 * d


def combine_reward(static: np.ndarray, interactions: Sequence[Interaction], weights: RewardWeights) -> np.ndarray:
    if not interactions:
        return static.copy()
    collide = np.logical_or.reduce([i.collide for i in interactions])
    d_min = np.minimum.reduce([i.d_min for i in interactions])
    c = -collide.sum(axis=1)
    s = -np.exp(-SAFE_DISTANCE_SCALE * d_min).sum(axis=1)
    return static + weights.w1 * c + weights.w2 * s


def reward(gamma, ego: Agent, ego_rollout: Sequence[PredState], other_rollouts, scenario: Scenario,
           weights: RewardWeights = RewardWeights(), dt_action: float = 1.0, dt: float = 0.1) -> float:
    """Reward of one sequence.

    ``other_rollouts`` holds ``(states, length, width)`` triples time-aligned
    with ``ego_rollout``; ``gamma`` only fixes the number of decision steps.
    """
    n_sub = int(round(dt_action / dt))
    roll = np.array([[s.x, s.y, s.theta, s.v] for s in ego_rollout])[None]
    stat = static_reward(ego, roll, scenario, weights, n_sub)
    inter = []
    for states, length, width in other_rollouts:
        arr = np.array([[s.x, s.y, s.theta, s.v] for s in states]) if not isinstance(states, np.ndarray) else states
        inter.append(interaction_terms(roll, (ego.length, ego.width), arr, (length, width), n_sub))
    return float(combine_reward(stat, inter, weights)[0])


# ---------------------------------------------------------------------- game

class LevelKGame:
    """Caches rollouts and best responses of a fixed set of agents."""

    def __init__(self, agents: Sequence[Agent], scenario: Scenario, config: LevelKConfig = LevelKConfig(),
                 background: Sequence[tuple[np.ndarray, float, float]] = ()):
        self.agents = {a.id: a for a in agents}
        self.scenario = scenario
        self.config = config
        self.dt = scenario.dt
        self.n_sub = int(round(config.dt_action / self.dt))
        self.n = config.T_g * self.n_sub
        self.background = list(background)
        self._rolls: dict[int, np.ndarray] = {}
        self._static: dict[int, np.ndarray] = {}
        self._inter: dict[tuple, Interaction] = {}
        self._br: dict[tuple, int] = {}

    def rollouts(self, aid: int) -> np.ndarray:
        if aid not in self._rolls:
            a = self.agents[aid]
            self._rolls[aid] = rollout_all(a.state, self.config.T_g, self.config.dt_action, self.dt)
        return self._rolls[aid]

    def static(self, aid: int) -> np.ndarray:
        if aid not in self._static:
            a = self.agents[aid]
            stat = static_reward(a, self.rollouts(aid), self.scenario, self.config.weights, self.n_sub)
            bg = [interaction_terms(self.rollouts(aid), (a.length, a.width), r, (lo, wo), self.n_sub)
                  for r, lo, wo in self.background]
            self._static[aid] = (stat, bg)
        return self._static[aid]

    def frozen(self, aid: int) -> np.ndarray:
        a = self.agents[aid]
        return constant_rollout(a.state, a.inputs, self.n, self.dt)

    def response_rollout(self, aid: int, level: int, others: tuple[int, ...]):
        """Rollout of ``aid`` as seen by a level-``level + 1`` opponent; -1 means frozen."""
        if level < 0:
            return self.frozen(aid)
        return self.rollouts(aid)[self.best_response_index(aid, level, others)]

    def interaction(self, aid: int, oid: int, level: int, others_of_o: tuple[int, ...]) -> Interaction:
        key = (aid, oid, level, others_of_o)
        if key not in self._inter:
            a, o = self.agents[aid], self.agents[oid]
            roll = self.response_rollout(oid, level, others_of_o)
            self._inter[key] = interaction_terms(self.rollouts(aid), (a.length, a.width), roll,
                                                 (o.length, o.width), self.n_sub)
        return self._inter[key]

    def rewards(self, aid: int, levels: dict[int, int]) -> np.ndarray:
        """Rewards of all of ``aid``'s sequences when each other ``j`` plays
        ``levels[j]`` (-1 = frozen)."""
        stat, bg = self.static(aid)
        participants = tuple(sorted([aid, *levels]))
        inter = list(bg)
        for oid, lvl in sorted(levels.items()):
            inter.append(self.interaction(aid, oid, lvl, tuple(p for p in participants if p != oid)))
        return combine_reward(stat, inter, self.config.weights)

    def best_response_index(self, aid: int, level: int, others: tuple[int, ...]) -> int:
        key = (aid, level, others)
        if key not in self._br:
            lvl = {oid: level - 1 for oid in others}
            self._br[key] = argmax_last(self.rewards(aid, lvl))
        return self._br[key]

    def best_response(self, aid: int, level: int, others: Optional[Sequence[int]] = None) -> ActionSequence:
        others = tuple(sorted(self.agents.keys() - {aid})) if others is None else tuple(sorted(others))
        return sequence_from_position(self.best_response_index(aid, level, others), self.config.T_g)

    def expected_rewards(self, aid: int, beliefs: dict[int, Belief]) -> np.ndarray:
        others = sorted(beliefs)
        total = np.zeros(len(self.rollouts(aid)))
        for combo in itertools.product(LEVELS, repeat=len(others)):
            p = math.prod(beliefs[o].p[k] for o, k in zip(others, combo))
            if p == 0.0:
                continue
            total += p * self.rewards(aid, dict(zip(others, combo)))
        return total

    def select_action(self, aid: int, beliefs: dict[int, Belief]) -> ActionSequence:
        pos = argmax_last(self.expected_rewards(aid, beliefs))
        return sequence_from_position(pos, self.config.T_g)

    def first_inputs(self, aid: int) -> dict[int, PredInput]:
        """First maneuver of ``aid``'s level-k response for k = 0, 1, 2."""
        others = tuple(sorted(self.agents.keys() - {aid}))
        out = {}
        for k in LEVELS:
            m = self.best_response(aid, k, others).maneuvers[0]
            out[k] = PredInput(m.a, m.omega)
        return out


def best_response(level: int, ego: Agent, others: Sequence[Agent], scenario: Scenario,
                  weights: RewardWeights = RewardWeights(), T_g: int = 3, dt_action: float = 1.0,
                  background=()) -> ActionSequence:
    game = LevelKGame([ego, *others], scenario, LevelKConfig(T_g, dt_action, weights), background)
    return game.best_response(ego.id, level)


def select_action(ego: Agent, others: Sequence[tuple[Agent, Belief]], scenario: Scenario,
                  weights: RewardWeights = RewardWeights(), T_g: int = 3, dt_action: float = 1.0,
                  background=()) -> ActionSequence:
    game = LevelKGame([ego, *(a for a, _ in others)], scenario, LevelKConfig(T_g, dt_action, weights), background)
    return game.select_action(ego.id, {a.id: b for a, b in others})


def update_belief(belief: Belief, observed: PredInput, predictions: dict[int, PredInput]) -> Belief:
    """Blend toward the level whose predicted first input is closest in 1-norm.

    Ties go to the smallest level.
    """
    errs = [abs(observed.a - predictions[k].a) + abs(observed.omega - predictions[k].omega) for k in LEVELS]
    k_star = int(np.argmin(errs))
    p = [BELIEF_KEEP * belief.p[k] + (1 - BELIEF_KEEP) * (1.0 if k == k_star else 0.0) for k in LEVELS]
    total = sum(p)
    return Belief(tuple(x / total for x in p))


# --------------------------------------------------------------- trajectory

def maneuver_trajectory(ego_state: VehicleState, m: Maneuver, n_steps: int, dt: float,
                        wheelbase: float, t0_step: int = 0) -> Trajectory:
    """Single-track states along the prediction-model rollout of one maneuver.

    Steering follows from the yaw rate as tan(delta) = omega * wheelbase / v.
    """
    states = [VehicleState(*ego_state)]
    cur = PredState(ego_state.x, ego_state.y, ego_state.v, ego_state.phi)
    for _ in range(n_steps):
        cur = predict_state(cur, PredInput(m.a, m.omega), dt)
        delta = math.atan(m.omega * wheelbase / cur.v) if cur.v > 0.1 else 0.0
        states.append(VehicleState(cur.x, cur.y, cur.v, cur.theta, delta))
    return Trajectory(tuple(states), t0_step)


@dataclass
class IntersectionPlan:
    trajectory: Trajectory
    sequence: Optional[ActionSequence]
    emergency: bool
    # first inputs of every other agent's level-k response, for belief updates
    level_inputs: dict[int, dict[int, PredInput]]


def plan_intersection(ego_state: VehicleState, scenario: Scenario, beliefs: dict[int, Belief],
                      config: LevelKConfig, *, ego: Agent, others: Sequence[Agent],
                      predictions: Sequence[Occupancy], t0_step: int = 0, background=()) -> IntersectionPlan:
    """Belief-weighted level-k decision, executed as the first maneuver.

    Falls back to emergency braking when the maneuver's trajectory fails the
    feasibility check against ``predictions``.
    """
    params = scenario.vehicle_parameters
    game = LevelKGame([ego, *others], scenario, config, background)
    gamma = game.select_action(ego.id, {o.id: beliefs.get(o.id, Belief.uniform()) for o in others})
    n_sub = int(round(config.dt_action / scenario.dt))
    traj = maneuver_trajectory(ego_state, gamma.maneuvers[0], n_sub, scenario.dt, params.wheelbase, t0_step)
    level_inputs = {o.id: game.first_inputs(o.id) for o in others}
    if check_feasibility(traj, predictions, scenario).feasible:
        return IntersectionPlan(traj, gamma, False, level_inputs)
    brake = emergency_braking(ego_state, scenario.dt, params, n_sub, t0_step)
    return IntersectionPlan(brake, gamma, True, level_inputs)
