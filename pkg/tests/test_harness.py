import math
import shutil

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from make_corpus import W
from oracles import corners
from roadbench.drivability import check_feasibility
from roadbench.harness import (
    MismatchedUniverse,
    Outcome,
    ResultRow,
    compare_results,
    largest_remainder_percentages,
    read_results_csv,
    read_trajectory_csv,
    run_suite,
    write_results_csv,
    write_trajectory_csv,
)
from roadbench.scenario import load_scenario
from roadbench.traffic import D_MIN, idm_acceleration

pytestmark = pytest.mark.slow


def rows(ids, solved):
    return [ResultRow(i, "c", Outcome.SOLVED if i in solved else Outcome.COLLISION, 1.0 if i in solved else None)
            for i in ids]


# ------------------------------------------------------------ single runs

def test_empty_road_solved(corpus_run):
    r = corpus_run("01_straight")
    assert r.outcome == Outcome.SOLVED
    assert r.fallbacks == 0 and r.levelk_cycles == 0
    assert 0 <= r.J_ego < 5.0


def test_blocked_road_never_collides(corpus_run, corpus_scenario):
    r = corpus_run("06_blocked_road")
    assert r.outcome in (Outcome.GOAL_NOT_REACHED, Outcome.TIMEOUT)
    assert r.J_ego is None
    sc = corpus_scenario("06_blocked_road")
    block = sc.obstacles[0].state_at(0)
    # the parked car stands across the lane; its rear face is half its width short of the centre
    rear = block.x - 0.5 * sc.obstacles[0].width
    params = sc.vehicle_parameters
    # at every step full braking would still stop short of the block
    for st_ in r.trajectory.states:
        assert st_.x + 0.5 * params.length + st_.v**2 / (2 * params.a_max) < rear
    assert check_feasibility(r.trajectory, list(r.occupancies.values()), sc).feasible


def _route_gaps(r, agent_id):
    """Bumper gaps along the northbound route x = W/2 from the agent to the ego."""
    occ = r.occupancies[agent_id]
    gaps = []
    for k, s in enumerate(r.trajectory.states):
        i = k - occ.t0_step
        if not 0 <= i < len(occ):
            continue
        ax, ay = occ.states[i, :2]
        pts = [p for p in corners(s.x, s.y, s.phi, 4.3, 1.7) if abs(p[0] - W / 2) <= 0.9 + 0.3 and p[1] > ay]
        if pts:
            gaps.append(min(p[1] for p in pts) - ay - 0.5 * occ.length)
    return gaps


@pytest.mark.parametrize("name", ["04_crossing_yield", "05_crossing_late"])
def test_reactive_gap_never_below_minimum(corpus_run, name):
    r = corpus_run(name)
    assert r.outcome != Outcome.COLLISION
    assert r.levelk_cycles > 0
    gaps = _route_gaps(r, 1)
    assert all(g >= D_MIN for g in gaps), min(gaps)


def test_idm_free_road_and_standstill():
    assert idm_acceleration(0.0, 10.0, None) == pytest.approx(1.5)
    assert idm_acceleration(10.0, 10.0, None) == pytest.approx(0.0)
    # stopped in front of a stopped leader exactly at the jam distance
    assert idm_acceleration(0.0, 10.0, D_MIN) == pytest.approx(0.0)


# ------------------------------------------------------------ suites

def _subset(tmp_path, corpus_dir, names):
    d = tmp_path / "suite"
    d.mkdir()
    for n in names:
        shutil.copy(corpus_dir / f"{n}.rbs", d)
    return d


def test_three_solvable_scenarios(tmp_path, corpus_dir):
    d = _subset(tmp_path, corpus_dir, ["01_straight", "02_lane_change", "09_straight_fast"])
    rep = run_suite(d, budget_s=600)
    assert [r.outcome for r in rep.records] == [Outcome.SOLVED] * 3
    overall = rep.rows[-1]
    assert overall.cluster == "Overall" and (overall.total, overall.solved) == (3, 3)
    costs = np.array([r.J_ego for r in rep.records])
    assert overall.mean == pytest.approx(costs.mean())
    assert overall.std == pytest.approx(costs.std())
    assert overall.worst == pytest.approx(costs.max())
    for r in rep.records:
        assert check_feasibility(r.trajectory, list(r.occupancies.values()),
                                 load_scenario(d / f"{r.scenario_id}.rbs")).feasible


def test_zero_budget_all_timeout(corpus_dir):
    rep = run_suite(corpus_dir, budget_s=0)
    assert {r.outcome for r in rep.records} == {Outcome.TIMEOUT}
    cov = compare_results(rep, rep).coverage
    assert cov.both == 0 and cov.percentages[0] == 0.0


def test_csv_is_deterministic(tmp_path, corpus_dir):
    d = _subset(tmp_path, corpus_dir, ["01_straight", "11_braking_leader"])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_results_csv(run_suite(d, seed=3).records, a, timing=False)
    write_results_csv(run_suite(d, seed=3).records, b, timing=False)
    assert a.read_bytes() == b.read_bytes()
    back = read_results_csv(a)
    assert [r.scenario_id for r in back] == ["01_straight", "11_braking_leader"]


def test_trajectory_csv_round_trip(tmp_path, corpus_run):
    traj = corpus_run("01_straight").trajectory
    p = tmp_path / "t.csv"
    write_trajectory_csv(traj, p)
    assert p.read_text(encoding="utf-8").splitlines()[0] == "t_step,x,y,v,phi,delta"
    again = read_trajectory_csv(p)
    assert again.t0_step == traj.t0_step
    np.testing.assert_array_equal(again.as_array(), traj.as_array())


# ------------------------------------------------------------ coverage

def test_reference_partition():
    ids = [f"s{i:03d}" for i in range(360)]
    both = set(ids[:131])
    a = both | set(ids[131:243])
    b = both | set(ids[243:298])
    assert (len(a), len(b)) == (243, 186)
    cov = compare_results(rows(ids, a), rows(ids, b)).coverage
    assert cov.counts == (131, 112, 55, 62)
    assert cov.percentages == (36.4, 31.1, 15.3, 17.2)


def test_ten_scenarios_set_algebra():
    ids = [f"s{i}" for i in range(10)]
    a = {"s0", "s1", "s2", "s3", "s4", "s5", "s6"}
    b = {"s0", "s1", "s2", "s3", "s8", "s9"}
    cov = compare_results(rows(ids, a), rows(ids, b)).coverage
    assert cov.counts == (4, 3, 2, 1)
    assert cov.total == 10


def test_identical_and_disjoint():
    ids = [f"s{i}" for i in range(6)]
    same = compare_results(rows(ids, {"s1", "s2"}), rows(ids, {"s1", "s2"})).coverage
    assert same.counts == (2, 0, 0, 4)
    apart = compare_results(rows(ids, {"s1", "s2"}), rows(ids, {"s3"})).coverage
    assert apart.both == 0


def test_mismatched_universe():
    with pytest.raises(MismatchedUniverse):
        compare_results(rows(["a", "b"], set()), rows(["a", "c"], set()))


def test_common_rows_cover_only_shared_solves():
    ids = [f"s{i}" for i in range(4)]
    a = [ResultRow(i, "c", Outcome.SOLVED, float(k)) for k, i in enumerate(ids)]
    b = rows(ids, {"s1", "s3"})
    rep = compare_results(a, b)
    overall = rep.common_rows_a[-1]
    assert overall.solved == 2
    assert overall.mean == pytest.approx(2.0)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=6))
def test_percentages_add_to_hundred(counts):
    pct = largest_remainder_percentages(counts)
    total = sum(counts)
    if total == 0:
        assert all(p == 0 for p in pct)
        return
    assert round(sum(pct) * 10) == 1000
    for c, p in zip(counts, pct):
        assert abs(p - 100 * c / total) < 0.1 + 1e-9


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 40), data=st.data())
def test_partition_matches_set_algebra(n, data):
    ids = [f"s{i}" for i in range(n)]
    a = set(data.draw(st.lists(st.sampled_from(ids), unique=True)))
    b = set(data.draw(st.lists(st.sampled_from(ids), unique=True)))
    cov = compare_results(rows(ids, a), rows(ids, b)).coverage
    assert cov.counts == (len(a & b), len(a - b), len(b - a), n - len(a | b))
