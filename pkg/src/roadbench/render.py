"""SVG snapshot of a scenario run: lanelets grey, goal yellow, obstacles blue,
ego green."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional
from xml.sax.saxutils import escape

import numpy as np

from .dynamics import Trajectory
from .geometry import rectangle_corners
from .prediction import Occupancy
from .scenario import Scenario

LANE_FILL = "#bdbdbd"
WALKWAY_FILL = "#e0d6c8"
GOAL_FILL = "#f2d21b"
OBSTACLE_FILL = "#1f5fbf"
EGO_FILL = "#2ca02c"
SCALE = 4.0
PAD = 10.0


def _points(pts: np.ndarray) -> str:
    return " ".join(f"{x:.2f},{-y:.2f}" for x, y in pts)


def render_svg(scenario: Scenario, trajectory: Optional[Trajectory] = None,
               occupancies: Iterable[Occupancy] = ()) -> str:
    """SVG document; world y points up, so it is flipped in the output."""
    occupancies = list(occupancies)
    allpts = np.vstack([ll.polygon_vertices for ll in scenario.network])
    lo, hi = allpts.min(axis=0) - PAD, allpts.max(axis=0) + PAD
    width, height = hi - lo
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width * SCALE:.0f}" height="{height * SCALE:.0f}" '
        f'viewBox="{lo[0]:.2f} {-hi[1]:.2f} {width:.2f} {height:.2f}">',
        f"<title>{escape(scenario.id)}</title>",
        '<rect x="-1e5" y="-1e5" width="2e5" height="2e5" fill="white"/>',
    ]
    for ll in scenario.network:
        fill = LANE_FILL if ll.is_driving else WALKWAY_FILL
        out.append(f'<polygon points="{_points(ll.polygon_vertices)}" fill="{fill}" stroke="#888" '
                   f'stroke-width="0.1"/>')
    goal = scenario.planning_problem.goal_region
    out.append(f'<polygon points="{_points(goal.polygon)}" fill="{GOAL_FILL}" fill-opacity="0.8"/>')

    shown = {o.obstacle_id for o in occupancies}
    for occ in occupancies:
        out.append(f'<polyline points="{_points(occ.states[:, :2])}" fill="none" stroke="{OBSTACLE_FILL}" '
                   f'stroke-width="0.3" stroke-opacity="0.5"/>')
        for c in occ.corners[:: max(1, len(occ) // 8)]:
            out.append(f'<polygon points="{_points(c)}" fill="{OBSTACLE_FILL}" fill-opacity="0.35"/>')
    for o in scenario.obstacles:
        s = o.state_at(0)
        if o.id in shown or s is None:
            continue
        c = rectangle_corners(s.x, s.y, s.theta, o.length, o.width)
        out.append(f'<polygon points="{_points(c)}" fill="{OBSTACLE_FILL}"/>')

    params = scenario.vehicle_parameters
    init = scenario.planning_problem.initial_state
    c = rectangle_corners(init.x, init.y, init.phi, params.length, params.width)
    out.append(f'<polygon points="{_points(c)}" fill="{EGO_FILL}"/>')
    if trajectory is not None and len(trajectory) > 1:
        arr = trajectory.as_array()
        out.append(f'<polyline points="{_points(arr[:, :2])}" fill="none" stroke="{EGO_FILL}" '
                   f'stroke-width="0.5"/>')
        last = arr[-1]
        c = rectangle_corners(last[0], last[1], last[3], params.length, params.width)
        out.append(f'<polygon points="{_points(c)}" fill="none" stroke="{EGO_FILL}" stroke-width="0.3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, scenario: Scenario, trajectory: Optional[Trajectory] = None,
              occupancies: Iterable[Occupancy] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_svg(scenario, trajectory, occupancies), encoding="utf-8")
    return path
