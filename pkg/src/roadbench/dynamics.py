"""Kinematic single-track model of the ego vehicle (forward Euler)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import VehicleParameters
from .states import ControlInput, VehicleState

__all__ = [
    "ControlInput",
    "Trajectory",
    "reconstruct_inputs",
    "rollout",
    "step_single_track",
]


@dataclass(frozen=True)
class Trajectory:
    """Ego states at uniform spacing ``dt`` starting at time step ``t0_step``."""

    states: tuple[VehicleState, ...]
    t0_step: int = 0

    def __post_init__(self):
        if not self.states:
            raise ValueError("trajectory needs at least one state")
        object.__setattr__(self, "states", tuple(VehicleState(*s) for s in self.states))

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def as_array(self) -> np.ndarray:
        """``(n, 5)`` array with columns x, y, v, phi, delta."""
        return np.array(self.states, dtype=float)

    @property
    def time_steps(self) -> np.ndarray:
        return np.arange(self.t0_step, self.t0_step + len(self.states))

    @classmethod
    def from_array(cls, arr, t0_step: int = 0) -> "Trajectory":
        return cls(tuple(VehicleState(*map(float, row)) for row in np.asarray(arr)), t0_step)

    def concat(self, other: "Trajectory") -> "Trajectory":
        """Append ``other``, whose first state must coincide with our last."""
        if other.t0_step != self.t0_step + len(self.states) - 1:
            raise ValueError("trajectories are not contiguous")
        return Trajectory(self.states + other.states[1:], self.t0_step)


def step_single_track(state: VehicleState, u: ControlInput, dt: float,
                      params: VehicleParameters) -> VehicleState:
    x, y, v, phi, delta = state
    x_n = x + v * math.cos(phi) * dt
    y_n = y + v * math.sin(phi) * dt
    phi_n = phi + (v / params.wheelbase) * math.tan(delta) * dt
    v_n = min(max(v + u.a * dt, params.v_min), params.v_max)
    delta_n = min(max(delta + u.v_delta * dt, -params.delta_max), params.delta_max)
    return VehicleState(x_n, y_n, v_n, phi_n, delta_n)


def rollout(initial: VehicleState, inputs: Sequence[ControlInput], dt: float,
            params: VehicleParameters, t0_step: int = 0) -> Trajectory:
    states = [VehicleState(*initial)]
    for u in inputs:
        states.append(step_single_track(states[-1], ControlInput(*u), dt, params))
    return Trajectory(tuple(states), t0_step)


def reconstruct_inputs(traj: Trajectory, dt: float,
                       params: VehicleParameters) -> tuple[list[ControlInput], np.ndarray]:
    """Finite-difference inputs per state pair plus the one-step position residual.

    The residual is the distance between the model's prediction from state
    ``k`` under the reconstructed inputs and the recorded state ``k + 1``.
    """
    if len(traj) < 2:
        raise ValueError("need at least two states")
    inputs = []
    residuals = np.empty(len(traj) - 1)
    for k, (s0, s1) in enumerate(zip(traj.states[:-1], traj.states[1:])):
        u = ControlInput((s1.v - s0.v) / dt, (s1.delta - s0.delta) / dt)
        inputs.append(u)
        pred = step_single_track(s0, u, dt, params)
        residuals[k] = math.hypot(pred.x - s1.x, pred.y - s1.y)
    return inputs, residuals


def emergency_braking(state: VehicleState, dt: float, params: VehicleParameters,
                      n_steps: int, t0_step: int = 0) -> Trajectory:
    """Full braking with the steering wheel returned to centre at the rate bound.

    Once stopped the vehicle stays put; the result always has ``n_steps + 1``
    states.
    """
    states = [VehicleState(*state)]
    for _ in range(n_steps):
        s = states[-1]
        if s.v > 0:
            a = -min(params.a_max, s.v / dt)
        elif s.v < 0:
            a = min(params.a_max, -s.v / dt)
        else:
            a = 0.0
        v_delta = -math.copysign(min(params.v_delta_max, abs(s.delta) / dt), s.delta)
        states.append(step_single_track(s, ControlInput(a, v_delta), dt, params))
    return Trajectory(tuple(states), t0_step)
