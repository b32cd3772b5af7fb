"""Command line entry point: ``roadbench run|compare|score``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Optional, Sequence

from .drivability import check_feasibility, scenario_occupancies
from .frenet_planner import PlannerConfig
from .harness import (
    HarnessConfig,
    MismatchedUniverse,
    compare_results,
    read_results_csv,
    read_trajectory_csv,
    run_suite,
    scenario_paths,
    write_results_csv,
    write_rows_csv,
    write_trajectory_csv,
)
from .levelk_planner import LevelKConfig, RewardWeights
from .render import write_svg
from .scenario import ObstacleKind, ParseError, ValidationError, goal_reached, load_scenario
from .scoring import TrajectoryTooShort, tr1_cost


def _override(obj, values: dict, where: str):
    known = {f.name for f in fields(obj)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {where} keys: {sorted(unknown)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    return replace(obj, **values)


def load_config(path: Optional[str]) -> HarnessConfig:
    """Harness configuration from a JSON file.

    Top-level keys override HarnessConfig fields; ``planner`` and ``levelk``
    hold nested overrides, ``levelk.weights`` the reward weights.
    """
    config = HarnessConfig()
    if path is None:
        return config
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    planner = _override(PlannerConfig(), data.pop("planner", {}), "planner")
    lk = dict(data.pop("levelk", {}))
    weights = _override(RewardWeights(), lk.pop("weights", {}), "levelk.weights")
    levelk = _override(LevelKConfig(weights=weights), lk, "levelk")
    config = _override(config, data, "config")
    return replace(config, planner=planner, levelk=levelk)


def _print_rows(rows, title: str) -> None:
    print(title)
    print(f"  {'cluster':<16}{'total':>7}{'solved':>8}{'mean':>10}{'std':>10}{'worst':>10}")
    for r in rows:
        stats = "".join(f"{x:>10.3f}" if x is not None else f"{'-':>10}" for x in (r.mean, r.std, r.worst))
        print(f"  {r.cluster:<16}{r.total:>7}{r.solved:>8}{stats}")


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.scenario_budget_s is not None:
        config = replace(config, scenario_budget_s=args.scenario_budget_s)
    report = run_suite(args.source, config, budget_s=args.budget_s, workers=args.workers, seed=args.seed)
    for r in report.records:
        cost = f"J_ego={r.J_ego:.4f}" if r.J_ego is not None else ""
        print(f"{r.scenario_id:<28}{r.outcome.value:<18}{cost}")
    _print_rows(report.rows, "per-cluster statistics over solved runs")
    if args.out:
        write_results_csv(report.records, args.out, timing=not args.no_timing)
    if args.trajectories:
        out = Path(args.trajectories)
        out.mkdir(parents=True, exist_ok=True)
        for r in report.records:
            if r.trajectory is not None:
                write_trajectory_csv(r.trajectory, out / f"{r.scenario_id}.csv")
    if args.render:
        by_id = {load_scenario(p).id: p for p in scenario_paths(args.source)}
        for r in report.records:
            scenario = load_scenario(by_id[r.scenario_id])
            write_svg(Path(args.render) / f"{r.scenario_id}.svg", scenario, r.trajectory, r.occupancies.values())
    return 0


def cmd_compare(args) -> int:
    a, b = read_results_csv(args.a), read_results_csv(args.b)
    try:
        report = compare_results(a, b)
    except MismatchedUniverse as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    cov = report.coverage
    labels = ("both", "only_A", "only_B", "neither")
    for label, n, pct in zip(labels, cov.counts, cov.percentages):
        print(f"{label:<8}{n:>6}  {pct:5.1f} %")
    _print_rows(report.rows, "A: all scenarios")
    _print_rows(report.common_rows_a, "A: scenarios solved by both")
    _print_rows(report.common_rows_b, "B: scenarios solved by both")
    if args.out:
        write_rows_csv(report.common_rows_a, args.out)
    return 0


def cmd_score(args) -> int:
    scenario = load_scenario(args.scenario)
    traj = read_trajectory_csv(args.trajectory)
    end = traj.t0_step + len(traj) - 1
    occupancies = scenario_occupancies(scenario, traj.t0_step, end)
    verdict = check_feasibility(traj, occupancies, scenario)
    reached = goal_reached(scenario.planning_problem, traj.states[-1], end)
    result = {"scenario_id": scenario.id, "feasible": verdict.feasible,
              "reason": None if verdict.feasible else verdict.reason(), "goal_reached": reached}
    if any(o.kind == ObstacleKind.DYNAMIC_REACTIVE for o in scenario.obstacles):
        result["note"] = "reactive obstacles are not part of the scenario file and were not checked"
    try:
        rep = tr1_cost(traj, scenario, occupancies=occupancies)
        result.update(J_ego=rep.J_ego, J_jerk=rep.J_jerk, J_SR=rep.J_SR, J_D=rep.J_D, J_LC=rep.J_LC)
    except TrajectoryTooShort as exc:
        result["error"] = str(exc)
    print(json.dumps(result, indent=2))
    return 0 if verdict.feasible and reached else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roadbench", description="Closed-loop motion planning benchmark.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file or every scenario in a directory")
    r.add_argument("source")
    r.add_argument("--config", help="JSON file with configuration overrides")
    r.add_argument("--budget-s", type=float, default=6 * 3600.0, help="global wall-clock budget")
    r.add_argument("--scenario-budget-s", type=float, default=None, help="per-scenario wall-clock budget")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="results CSV")
    r.add_argument("--no-timing", action="store_true", help="leave wall_time_s empty for reproducible CSVs")
    r.add_argument("--trajectories", help="directory for executed trajectory CSVs")
    r.add_argument("--render", help="directory for SVG snapshots")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="coverage partition of two results files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--out", help="CSV with per-cluster statistics over commonly solved scenarios")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("score", help="check and score an externally produced trajectory")
    s.add_argument("scenario")
    s.add_argument("trajectory")
    s.set_defaults(func=cmd_score)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ParseError, ValidationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
