"""Lightweight immutable state and input records shared across modules."""
from __future__ import annotations

from typing import NamedTuple


class VehicleState(NamedTuple):
    """Kinematic single-track state ``[x, y, v, phi, delta]``."""

    x: float
    y: float
    v: float
    phi: float
    delta: float = 0.0


class ControlInput(NamedTuple):
    """Single-track inputs: longitudinal acceleration and steering velocity."""

    a: float
    v_delta: float


class PredState(NamedTuple):
    """State of the point-mass prediction model for surrounding traffic."""

    x: float
    y: float
    v: float
    theta: float


class PredInput(NamedTuple):
    """Constant inputs of the prediction model: acceleration and yaw rate."""

    a: float
    omega: float
