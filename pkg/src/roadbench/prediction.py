"""Constant-input forward simulation of surrounding traffic."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import rectangle_corners, wrap_angle
from .scenario import Obstacle
from .states import PredInput, PredState

__all__ = [
    "Occupancy",
    "PredInput",
    "PredState",
    "estimate_inputs",
    "horizon_steps",
    "predict_obstacle",
    "predict_state",
]


def predict_state(s: PredState, u: PredInput, dt: float) -> PredState:
    x = s.x + s.v * math.cos(s.theta) * dt
    y = s.y + s.v * math.sin(s.theta) * dt
    v = s.v + u.a * dt
    theta = s.theta + u.omega * dt
    return PredState(x, y, max(v, 0.0), theta)


def horizon_steps(horizon_s: float, dt: float) -> int:
    # guard against 3.0 / 0.1 = 30.000000000000004
    return int(math.ceil(horizon_s / dt - 1e-9))


@dataclass(frozen=True, eq=False)
class Occupancy:
    """Oriented-rectangle occupancy of one obstacle over consecutive steps.

    ``states[i]`` holds ``(x, y, theta, v)`` at time step ``t0_step + i``.
    """

    obstacle_id: int
    t0_step: int
    states: np.ndarray
    length: float
    width: float

    def __len__(self):
        return len(self.states)

    @property
    def time_steps(self) -> np.ndarray:
        return np.arange(self.t0_step, self.t0_step + len(self.states))

    @property
    def corners(self) -> np.ndarray:
        s = self.states
        return rectangle_corners(s[:, 0], s[:, 1], s[:, 2], self.length, self.width)

    def at(self, t_step: int) -> Optional[np.ndarray]:
        i = t_step - self.t0_step
        if 0 <= i < len(self.states):
            return self.states[i]
        return None

    def window(self, t_from: int, t_to: int) -> "Occupancy":
        """Sub-occupancy restricted to steps in ``[t_from, t_to]``."""
        lo = max(t_from, self.t0_step)
        hi = min(t_to, self.t0_step + len(self.states) - 1)
        if hi < lo:
            return Occupancy(self.obstacle_id, lo, np.zeros((0, 4)), self.length, self.width)
        return Occupancy(self.obstacle_id, lo, self.states[lo - self.t0_step:hi - self.t0_step + 1],
                         self.length, self.width)


InputEstimator = Callable[[Sequence[PredState], float], PredInput]


def estimate_inputs(history: Sequence[PredState], dt: float) -> PredInput:
    """Finite differences of the last two observations; zero without history."""
    if len(history) < 2:
        return PredInput(0.0, 0.0)
    prev, cur = history[-2], history[-1]
    return PredInput((cur.v - prev.v) / dt, float(wrap_angle(cur.theta - prev.theta)) / dt)


def rollout_constant(current: PredState, u: PredInput, dt: float, n_steps: int) -> list[PredState]:
    states = [current]
    for _ in range(n_steps):
        states.append(predict_state(states[-1], u, dt))
    return states


def predict_obstacle(obstacle: Obstacle, current: PredState, horizon_s: float = 3.0, dt: float = 0.1,
                     input_estimator: InputEstimator = estimate_inputs,
                     history: Sequence[PredState] = (), t_step: int = 0) -> Occupancy:
    """Occupancy for steps ``t_step + 1 .. t_step + ceil(horizon_s / dt)``.

    ``history`` holds earlier observations (oldest first); ``current`` is
    appended to it before estimating the constant inputs.
    """
    n = horizon_steps(horizon_s, dt)
    if obstacle.is_dynamic:
        u = input_estimator([*history, current], dt)
        pred = rollout_constant(current, u, dt, n)[1:]
    else:
        pred = [current] * n
    arr = np.array([[p.x, p.y, p.theta, p.v] for p in pred], dtype=float).reshape(-1, 4)
    return Occupancy(obstacle.id, t_step + 1, arr, obstacle.length, obstacle.width)
