"""Motion planning workbench: a sampling planner in the Frenét frame, a level-k
intersection planner, and the closed-loop evaluation pipeline around them."""
from .drivability import FeasibilityVerdict, check_collision, check_feasibility, check_kinematics, check_road_compliance
from .dynamics import Trajectory, emergency_braking, reconstruct_inputs, rollout, step_single_track
from .frenet_planner import (
    FrenetState,
    NoFeasibleCandidate,
    PlannerConfig,
    ProjectionError,
    from_frenet,
    generate_candidates,
    next_replan_interval,
    select_trajectory,
    to_frenet,
)
from .harness import (
    HarnessConfig,
    MismatchedUniverse,
    Outcome,
    RunRecord,
    SuiteReport,
    compare_results,
    run_scenario,
    run_suite,
)
from .levelk_planner import (
    MANEUVERS,
    ActionSequence,
    Belief,
    LevelKConfig,
    RewardWeights,
    best_response,
    plan_intersection,
    select_action,
    update_belief,
)
from .prediction import Occupancy, predict_obstacle, predict_state
from .route import NoRouteError, ReferencePath, plan_route
from .rules import robustness_g1, robustness_g4
from .scenario import Scenario, goal_reached, load_scenario, save_scenario
from .scoring import CostReport, tr1_cost
from .states import ControlInput, PredInput, PredState, VehicleState

__version__ = "0.1.0"
