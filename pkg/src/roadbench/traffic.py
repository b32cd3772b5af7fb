"""Reactive background traffic: IDM car following along a fixed lanelet route."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import polyline_lengths, project_onto_polyline, rectangle_corners
from .scenario import LaneletNetwork, Obstacle
from .states import PredState

T_HEADWAY = 1.5
A_IDM = 1.5
B_IDM = 2.0
D_MIN = 2.0
DELTA = 4.0
# strongest braking the surrogate may apply
A_BRAKE_LIMIT = 9.0
CORRIDOR_MARGIN = 0.3
LOOK_AHEAD = 150.0
RUN_OUT = 300.0


def idm_acceleration(v: float, v0: float, gap: Optional[float], dv: float = 0.0,
                     T: float = T_HEADWAY, a: float = A_IDM, b: float = B_IDM,
                     s0: float = D_MIN, delta: float = DELTA) -> float:
    """dv/dt of the Intelligent Driver Model; ``dv`` is v - v_leader."""
    free = 1.0 - (v / v0) ** delta if v0 > 0 else -1.0
    if gap is None:
        return a * free
    s_star = s0 + max(0.0, v * T + v * dv / (2.0 * math.sqrt(a * b)))
    return a * (free - (s_star / max(gap, 1e-3)) ** 2)


def route_polyline(network: LaneletNetwork, route: Sequence[int]) -> np.ndarray:
    pts = [np.asarray(network[route[0]].centerline, float)]
    for lid in route[1:]:
        c = np.asarray(network[lid].centerline, float)
        pts.append(c[1:] if np.linalg.norm(c[0] - pts[-1][-1]) < 1e-6 else c)
    line = np.vstack(pts)
    d = line[-1] - line[-2]
    return np.vstack([line, line[-1] + d / np.linalg.norm(d) * RUN_OUT])


@dataclass
class ReactiveAgent:
    """Arc-length state of an IDM vehicle on its route polyline."""

    obstacle: Obstacle
    line: np.ndarray
    cum: np.ndarray
    s: float
    v: float
    v0: float

    @classmethod
    def create(cls, obstacle: Obstacle, network: LaneletNetwork) -> "ReactiveAgent":
        line = route_polyline(network, obstacle.route)
        cum = polyline_lengths(line)
        init = obstacle.initial_state
        s, _, _ = project_onto_polyline(np.array([[init.x, init.y]]), line, cum)
        v0 = obstacle.desired_velocity if obstacle.desired_velocity is not None else init.v
        return cls(obstacle, line, cum, float(s[0]), float(init.v), float(v0))

    def pose(self) -> PredState:
        s = min(self.s, self.cum[-1])
        x = np.interp(s, self.cum, self.line[:, 0])
        y = np.interp(s, self.cum, self.line[:, 1])
        j = min(int(np.searchsorted(self.cum, s, side="right")) - 1, len(self.line) - 2)
        e = self.line[j + 1] - self.line[j]
        return PredState(float(x), float(y), self.v, math.atan2(e[1], e[0]))

    def gap_to(self, corners: np.ndarray) -> Optional[float]:
        """Bumper gap to a rectangle whose corners enter the corridor ahead."""
        s, d, _ = project_onto_polyline(corners, self.line, self.cum)
        half_w = 0.5 * self.obstacle.width + CORRIDOR_MARGIN
        ahead = (np.abs(d) <= half_w) & (s > self.s) & (s < self.s + LOOK_AHEAD)
        if not ahead.any():
            return None
        return float(np.min(s[ahead]) - self.s - 0.5 * self.obstacle.length)

    def step(self, others: Sequence[tuple[np.ndarray, float]], dt: float) -> None:
        """Advance one step; ``others`` holds (corners, speed) of every other vehicle."""
        lead_gap, lead_v = None, 0.0
        for corners, v in others:
            g = self.gap_to(corners)
            if g is not None and (lead_gap is None or g < lead_gap):
                lead_gap, lead_v = g, v
        a = idm_acceleration(self.v, self.v0, lead_gap, self.v - lead_v)
        a = max(a, -A_BRAKE_LIMIT)
        self.v = max(self.v + a * dt, 0.0)
        self.s += self.v * dt


def footprint(x: float, y: float, theta: float, length: float, width: float) -> np.ndarray:
    return rectangle_corners(x, y, theta, length, width)
