"""Closed-loop runs of single scenarios and of scenario suites."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .drivability import FeasibilityVerdict, check_feasibility
from .dynamics import Trajectory, emergency_braking
from .frenet_planner import NoFeasibleCandidate, PlannerConfig, ProjectionError, next_replan_interval, plan_frenet
from .geometry import project_onto_polyline, rectangle_corners, rectangles_overlap, wrap_angle
from .levelk_planner import Agent, Belief, LevelKConfig, plan_intersection, update_belief
from .prediction import Occupancy, PredInput, PredState, estimate_inputs, predict_obstacle
from .route import NoRouteError, ReferencePath, in_intersection_guard, plan_route, update_reference
from .rules import G1State, LeaderContext, evaluate_g1
from .scenario import ObstacleKind, Scenario, goal_reached, lanelet_containing, load_scenario
from .scoring import CostReport, TrajectoryTooShort, tr1_cost
from .states import VehicleState
from .traffic import ReactiveAgent, footprint, route_polyline

SCENARIO_SUFFIX = ".rbs"
RESULT_COLUMNS = ("scenario_id", "cluster", "outcome", "J_ego", "J_jerk", "J_SR", "J_D", "J_LC",
                  "wall_time_s", "steps")
TRAJECTORY_COLUMNS = ("t_step", "x", "y", "v", "phi", "delta")


class Outcome(str, Enum):
    SOLVED = "solved"
    COLLISION = "collision"
    INFEASIBLE = "infeasible"
    GOAL_NOT_REACHED = "goal_not_reached"
    TIMEOUT = "timeout"


class MismatchedUniverse(ValueError):
    """Two result sets do not cover the same scenario ids."""


@dataclass(frozen=True)
class HarnessConfig:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    levelk: LevelKConfig = field(default_factory=LevelKConfig)
    scenario_budget_s: float = 60.0
    use_levelk: bool = True
    seed: int = 0


@dataclass
class RunRecord:
    scenario_id: str
    cluster: str
    outcome: Outcome
    J_ego: Optional[float] = None
    report: Optional[CostReport] = None
    wall_time: float = 0.0
    steps: int = 0
    trajectory: Optional[Trajectory] = None
    verdict: Optional[FeasibilityVerdict] = None
    # executed occupancy of every obstacle, keyed by id
    occupancies: dict = field(default_factory=dict)
    fallbacks: int = 0
    levelk_cycles: int = 0

    @property
    def solved(self) -> bool:
        return self.outcome == Outcome.SOLVED


# ------------------------------------------------------------ traffic world

class World:
    """Ground-truth obstacle states, advanced one step at a time."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.agents = {o.id: ReactiveAgent.create(o, scenario.network)
                       for o in scenario.obstacles if o.kind == ObstacleKind.DYNAMIC_REACTIVE}
        self.log: dict[int, list] = {o.id: [] for o in scenario.obstacles}
        self.t = 0
        self._record()

    def state(self, oid: int, t: Optional[int] = None) -> Optional[PredState]:
        t = self.t if t is None else t
        if oid in self.agents:
            rows = self.log[oid]
            i = t - rows[0][0] if rows else -1
            return rows[i][1] if 0 <= i < len(rows) else None
        return self.scenario.obstacle(oid).state_at(t)

    def _record(self):
        for o in self.scenario.obstacles:
            s = self.agents[o.id].pose() if o.id in self.agents else o.state_at(self.t)
            if s is not None:
                self.log[o.id].append((self.t, s))

    def current(self) -> dict[int, PredState]:
        out = {}
        for o in self.scenario.obstacles:
            s = self.state(o.id)
            if s is not None:
                out[o.id] = s
        return out

    def advance(self, ego: VehicleState, ego_shape: tuple[float, float]) -> None:
        """Step to ``t + 1``; reactive agents react to the ego's current pose."""
        now = self.current()
        vehicles = {oid: (footprint(s.x, s.y, s.theta, self.scenario.obstacle(oid).length,
                                    self.scenario.obstacle(oid).width), s.v) for oid, s in now.items()}
        ego_fp = (footprint(ego.x, ego.y, ego.phi, *ego_shape), ego.v)
        for oid in sorted(self.agents):
            others = [ego_fp] + [v for k, v in sorted(vehicles.items()) if k != oid]
            self.agents[oid].step(others, self.scenario.dt)
        self.t += 1
        self._record()

    def occupancies(self) -> list[Occupancy]:
        out = []
        for o in self.scenario.obstacles:
            rows = self.log[o.id]
            if not rows:
                continue
            arr = np.array([[s.x, s.y, s.theta, s.v] for _, s in rows])
            out.append(Occupancy(o.id, rows[0][0], arr, o.length, o.width))
        return out

    def history(self, oid: int, n: int = 2) -> list[PredState]:
        return [s for _, s in self.log[oid][-n:]]


def _collides(ego: VehicleState, shape, world: World) -> bool:
    ec = rectangle_corners(ego.x, ego.y, ego.phi, *shape)
    for oid, s in world.current().items():
        o = world.scenario.obstacle(oid)
        if rectangles_overlap(ec, rectangle_corners(s.x, s.y, s.theta, o.length, o.width)):
            return True
    return False


# ------------------------------------------------------------ planner glue

def _ego_agent(ego: VehicleState, path: ReferencePath, scenario: Scenario, prev: Optional[VehicleState]) -> Agent:
    goal = np.array([scenario.planning_problem.goal_region.centroid])
    target_s, _, _ = project_onto_polyline(goal, path.points)
    params = scenario.vehicle_parameters
    a = (ego.v - prev.v) / scenario.dt if prev is not None else 0.0
    omega = ego.v * math.tan(ego.delta) / params.wheelbase
    return Agent(-1, PredState(ego.x, ego.y, ego.v, ego.phi), params.length, params.width,
                 tuple(path.lanelet_ids), path.points, float(target_s[0]), PredInput(a, omega))


def _other_agent(oid: int, state: PredState, world: World) -> Agent:
    o = world.scenario.obstacle(oid)
    net = world.scenario.network
    if oid in world.agents:
        lane_ids = tuple(o.route)
        line = world.agents[oid].line
    else:
        here = sorted(i for i in lanelet_containing(net, (state.x, state.y)) if net[i].is_driving)
        lane_ids = tuple(sorted(set().union(*(net.successor_closure(i) for i in here)))) if here else ()
        line = None
        if here:
            chain, lid = [here[0]], here[0]
            while net[lid].successors and len(chain) < 4:
                lid = min(net[lid].successors)
                chain.append(lid)
            line = route_polyline(net, chain)
    if line is None:
        line = np.array([[state.x, state.y], [state.x + math.cos(state.theta), state.y + math.sin(state.theta)]])
    cum_end = float(np.sum(np.linalg.norm(np.diff(line, axis=0), axis=1)))
    u = estimate_inputs(world.history(oid), world.scenario.dt)
    return Agent(oid, state, o.length, o.width, lane_ids, line, cum_end, u)


def _observed_input(world: World, oid: int, steps: int) -> Optional[PredInput]:
    rows = world.log[oid]
    if len(rows) < steps + 1:
        return None
    (t0, s0), (t1, s1) = rows[-steps - 1], rows[-1]
    span = (t1 - t0) * world.scenario.dt
    return PredInput((s1.v - s0.v) / span, float(wrap_angle(s1.theta - s0.theta)) / span)


def run_scenario(scenario: Scenario, config: HarnessConfig = HarnessConfig(),
                 deadline: Optional[float] = None) -> RunRecord:
    """Closed-loop simulation until goal, collision, step limit or budget."""
    start = time.perf_counter()
    budget_end = start + config.scenario_budget_s
    if deadline is not None:
        budget_end = min(budget_end, start + max(deadline - time.time(), 0.0))
    problem = scenario.planning_problem
    params = scenario.vehicle_parameters
    shape = (params.length, params.width)
    dt = scenario.dt
    n_pred = config.planner.horizon_s

    world = World(scenario)
    states = [VehicleState(*problem.initial_state)]
    t = 0
    rule_state = G1State()
    beliefs: dict[int, Belief] = {}
    fallbacks = levelk_cycles = 0
    outcome: Optional[Outcome] = None
    reached = False
    try:
        path = plan_route(scenario)
    except NoRouteError:
        path = None

    while outcome is None:
        if t >= problem.max_time_steps:
            outcome = Outcome.GOAL_NOT_REACHED
            break
        if time.perf_counter() > budget_end:
            outcome = Outcome.TIMEOUT
            break
        ego = states[-1]
        prev = states[-2] if len(states) > 1 else None
        current = world.current()
        predictions = [predict_obstacle(scenario.obstacle(oid), s, n_pred, dt,
                                        history=world.history(oid)[:-1], t_step=t)
                       for oid, s in sorted(current.items())]
        positions = [(s.x, s.y) for s in current.values()]
        interval = next_replan_interval(ego, scenario, config.planner, path, positions)
        n_exec = max(1, int(round(interval / dt)))

        plan: Optional[Trajectory] = None
        level_inputs = {}
        near = [oid for oid, s in sorted(current.items())
                if scenario.obstacle(oid).is_dynamic
                and math.hypot(s.x - ego.x, s.y - ego.y) <= config.levelk.interaction_radius]
        if (path is not None and config.use_levelk and near
                and in_intersection_guard(scenario.network, (ego.x, ego.y), config.planner.intersection_distance)):
            near.sort(key=lambda oid: math.hypot(current[oid].x - ego.x, current[oid].y - ego.y))
            others = [_other_agent(oid, current[oid], world) for oid in sorted(near[:config.levelk.max_others])]
            background = [(np.repeat([[s.x, s.y, s.theta, s.v]], int(round(config.levelk.T_g * config.levelk.dt_action / dt)) + 1, axis=0),
                           scenario.obstacle(oid).length, scenario.obstacle(oid).width)
                          for oid, s in sorted(current.items()) if not scenario.obstacle(oid).is_dynamic]
            res = plan_intersection(ego, scenario, beliefs, config.levelk, ego=_ego_agent(ego, path, scenario, prev),
                                    others=others, predictions=predictions, t0_step=t, background=background)
            plan, level_inputs = res.trajectory, res.level_inputs
            levelk_cycles += 1
            fallbacks += int(res.emergency)
        elif path is not None:
            a_now = (ego.v - prev.v) / dt if prev is not None else 0.0
            try:
                cand = plan_frenet(ego, t, scenario, path, predictions, config.planner, rule_state, a_now)
                plan = cand.trajectory
            except (NoFeasibleCandidate, ProjectionError):
                plan = None
        if plan is None:
            plan = emergency_braking(ego, dt, params, n_exec, t)
            fallbacks += 1

        executed_from = len(states) - 1
        for st in plan.states[1:1 + n_exec]:
            world.advance(states[-1], shape)
            states.append(VehicleState(*st))
            t += 1
            if _collides(states[-1], shape, world):
                outcome = Outcome.COLLISION
                break
            if goal_reached(problem, states[-1], t):
                reached = True
                break
            if t >= problem.max_time_steps:
                break
        if outcome is not None or reached:
            break

        seg = Trajectory(tuple(states[executed_from + 1:]), executed_from + 1)
        occ_now = [o.window(seg.t0_step, t) for o in world.occupancies()]
        ctx = LeaderContext(scenario.network, occ_now)
        leaders = ctx.leaders(seg.as_array(), seg.t0_step, params.length)
        rule_state = evaluate_g1(seg, leaders, params, dt, config.planner.t_c, rule_state).state

        for oid, preds in level_inputs.items():
            obs = _observed_input(world, oid, len(seg))
            if obs is not None:
                beliefs[oid] = update_belief(beliefs.get(oid, Belief.uniform()), obs, preds)
        if path is not None:
            path = update_reference(path, states[-1], scenario)

    traj = Trajectory(tuple(states), 0)
    occupancies = world.occupancies()
    verdict = check_feasibility(traj, occupancies, scenario) if len(traj) >= 2 else None
    report = None
    J = None
    if reached and outcome is None:
        if verdict is not None and verdict.feasible:
            outcome = Outcome.SOLVED
            try:
                report = tr1_cost(traj, scenario, dt, occupancies=occupancies)
                J = report.J_ego
            except TrajectoryTooShort:
                outcome = Outcome.INFEASIBLE
        else:
            outcome = Outcome.INFEASIBLE
    return RunRecord(scenario.id, scenario.cluster, outcome, J, report, time.perf_counter() - start, t,
                     traj, verdict, {o.obstacle_id: o for o in occupancies}, fallbacks, levelk_cycles)


# ------------------------------------------------------------------ suites

@dataclass(frozen=True)
class ClusterRow:
    cluster: str
    total: int
    solved: int
    mean: Optional[float]
    std: Optional[float]
    worst: Optional[float]


@dataclass(frozen=True)
class Coverage:
    both: int
    only_a: int
    only_b: int
    neither: int

    @property
    def total(self) -> int:
        return self.both + self.only_a + self.only_b + self.neither

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.both, self.only_a, self.only_b, self.neither)

    @property
    def percentages(self) -> tuple[float, float, float, float]:
        return largest_remainder_percentages(self.counts)


@dataclass
class SuiteReport:
    records: list
    rows: list[ClusterRow]
    coverage: Optional[Coverage] = None
    # Table-3 style statistics over the scenarios solved by both result sets
    common_rows_a: list[ClusterRow] = field(default_factory=list)
    common_rows_b: list[ClusterRow] = field(default_factory=list)


def largest_remainder_percentages(counts: Sequence[int], decimals: int = 1) -> tuple[float, ...]:
    """Percentages rounded so that they add up to exactly 100."""
    total = sum(counts)
    if total == 0:
        return tuple(0.0 for _ in counts)
    unit = 100 * 10**decimals
    raw = [c * unit / total for c in counts]
    floors = [math.floor(r) for r in raw]
    short = unit - sum(floors)
    order = sorted(range(len(counts)), key=lambda i: (-(raw[i] - floors[i]), i))
    for i in order[:short]:
        floors[i] += 1
    return tuple(f / 10**decimals for f in floors)


def _record_key(r):
    return r.scenario_id


def cluster_rows(records: Iterable, only: Optional[set] = None) -> list[ClusterRow]:
    """Per-cluster Total/Solved/Mean/Std/Worst plus an ``Overall`` row.

    Statistics are over solved runs; Std is the population standard deviation.
    """
    records = sorted(records, key=_record_key)
    if only is not None:
        records = [r for r in records if r.scenario_id in only]
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(r.cluster, []).append(r)
    rows = [_row(name, groups[name]) for name in sorted(groups)]
    rows.append(_row("Overall", records))
    return rows


def _row(name: str, recs: list) -> ClusterRow:
    costs = np.array([r.J_ego for r in recs if _is_solved(r)], float)
    if len(costs) == 0:
        return ClusterRow(name, len(recs), 0, None, None, None)
    return ClusterRow(name, len(recs), len(costs), float(costs.mean()), float(costs.std()), float(costs.max()))


def _is_solved(r) -> bool:
    return Outcome(r.outcome) == Outcome.SOLVED


def scenario_paths(source) -> list[Path]:
    p = Path(source)
    if p.is_dir():
        return sorted(p.glob(f"*{SCENARIO_SUFFIX}"))
    return [p]


def _run_path(path: str, config: HarnessConfig, deadline: float) -> RunRecord:
    scenario = load_scenario(path)
    if time.time() >= deadline:
        return RunRecord(scenario.id, scenario.cluster, Outcome.TIMEOUT)
    return run_scenario(scenario, config, deadline)


def run_suite(scenario_dir, config: HarnessConfig = HarnessConfig(), budget_s: float = 6 * 3600.0,
              workers: int = 1, seed: Optional[int] = None) -> SuiteReport:
    """Run every scenario under a global wall-clock budget.

    Scenarios start in order of file name; those not started before the
    budget runs out are recorded as timeouts. ``seed`` is kept in the
    configuration; the pipeline itself draws no random numbers.
    """
    if seed is not None:
        config = replace(config, seed=seed)
    paths = [str(p) for p in scenario_paths(scenario_dir)]
    if not paths:
        raise FileNotFoundError(f"no scenarios in {scenario_dir}")
    deadline = time.time() + max(budget_s, 0.0)
    if workers <= 1:
        records = [_run_path(p, config, deadline) for p in paths]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_path, paths, [config] * len(paths), [deadline] * len(paths)))
    records.sort(key=_record_key)
    return SuiteReport(records, cluster_rows(records))


def compare_results(a: Sequence, b: Sequence) -> SuiteReport:
    """Coverage partition of two result sets over the same scenario ids."""
    a = list(a.records) if isinstance(a, SuiteReport) else list(a)
    b = list(b.records) if isinstance(b, SuiteReport) else list(b)
    ids_a = {r.scenario_id for r in a}
    ids_b = {r.scenario_id for r in b}
    if ids_a != ids_b or len(ids_a) != len(a) or len(ids_b) != len(b):
        raise MismatchedUniverse(f"{len(ids_a ^ ids_b)} scenario ids differ between the result sets")
    sa = {r.scenario_id for r in a if _is_solved(r)}
    sb = {r.scenario_id for r in b if _is_solved(r)}
    both = sa & sb
    cov = Coverage(len(both), len(sa - sb), len(sb - sa), len(ids_a - sa - sb))
    return SuiteReport(sorted(a, key=_record_key), cluster_rows(a), cov,
                       cluster_rows(a, both), cluster_rows(b, both))


# --------------------------------------------------------------------- CSV

@dataclass(frozen=True)
class ResultRow:
    scenario_id: str
    cluster: str
    outcome: Outcome
    J_ego: Optional[float] = None
    J_jerk: Optional[float] = None
    J_SR: Optional[float] = None
    J_D: Optional[float] = None
    J_LC: Optional[float] = None
    wall_time_s: Optional[float] = None
    steps: int = 0


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def write_results_csv(records: Iterable, path, timing: bool = True) -> None:
    """One row per scenario, sorted by id. ``timing=False`` blanks wall_time_s
    so that repeated runs produce identical files."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in sorted(records, key=_record_key):
            rep = getattr(r, "report", None)
            terms = rep.terms if rep is not None else (getattr(r, "J_jerk", None), getattr(r, "J_SR", None),
                                                       getattr(r, "J_D", None), getattr(r, "J_LC", None))
            wall = getattr(r, "wall_time", getattr(r, "wall_time_s", None))
            w.writerow([r.scenario_id, r.cluster, Outcome(r.outcome).value, _fmt(r.J_ego), *map(_fmt, terms),
                        _fmt(wall) if timing else "", r.steps])


def read_results_csv(path) -> list[ResultRow]:
    def num(x):
        return float(x) if x != "" else None

    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for d in reader:
            rows.append(ResultRow(d["scenario_id"], d["cluster"], Outcome(d["outcome"]), num(d["J_ego"]),
                                  num(d["J_jerk"]), num(d["J_SR"]), num(d["J_D"]), num(d["J_LC"]),
                                  num(d["wall_time_s"]), int(d["steps"] or 0)))
    return rows


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for t, s in zip(traj.time_steps, traj.states):
            w.writerow([int(t), *map(repr, map(float, s))])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [(int(d["t_step"]), VehicleState(*(float(d[k]) for k in TRAJECTORY_COLUMNS[1:]))) for d in reader]
    if not rows:
        raise ValueError(f"{path}: empty trajectory")
    steps = [t for t, _ in rows]
    if steps != list(range(steps[0], steps[0] + len(steps))):
        raise ValueError(f"{path}: time steps are not consecutive")
    return Trajectory(tuple(s for _, s in rows), steps[0])


def write_rows_csv(rows: Sequence[ClusterRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("cluster", "total", "solved", "mean", "std", "worst"))
        for r in rows:
            w.writerow([r.cluster, r.total, r.solved, _fmt(r.mean), _fmt(r.std), _fmt(r.worst)])
