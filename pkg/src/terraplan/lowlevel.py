"""Low-level realization of planner commands.

PI speed feedback with slope and drag feedforward, a piecewise-linear drive
effort to throttle/brake split, and the kinematic-bicycle curvature to
steering-angle map. The feedforward contract is that it opposes gravity
along the forward axis: with the pitch convention (theta > 0 means gravity
pulls forward) that makes c1 negative when matched to the plant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constraints import GRAVITY


@dataclass(frozen=True)
class ControllerGains:
    kp: float = 8.0
    ki: float = 2.5
    c1: float = -1.0                # slope feedforward, multiplies g*sin(theta)
    c2: float = 0.05                # drag feedforward per (m/s)
    integral_limit: float = 0.6
    u_throttle_scale: float = 4.0   # effort at which throttle saturates
    u_brake_scale: float = 4.0      # |effort| at which brake saturates
    delta_max: float = 0.61         # steering angle limit, rad
    g: float = GRAVITY

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ValueError("gains must be >= 0")
        if self.integral_limit <= 0 or self.u_throttle_scale <= 0 or self.u_brake_scale <= 0:
            raise ValueError("limits and scales must be > 0")


@dataclass(frozen=True)
class ControllerState:
    integral: float = 0.0


@dataclass(frozen=True)
class ActuatorCommand:
    throttle: float
    brake: float
    steer: float


def speed_control(v: float, v_des: float, theta: float, gains: ControllerGains,
                  state: ControllerState, dt: float) -> tuple[float, ControllerState]:
    """One PI + feedforward update; returns (drive effort, new state)."""
    e = v - v_des
    integral = state.integral + e * dt
    integral = max(-gains.integral_limit, min(gains.integral_limit, integral))
    u = (-gains.kp * e - gains.ki * integral
         + gains.c1 * gains.g * math.sin(theta) + gains.c2 * v)
    return u, ControllerState(integral=integral)


def actuator_map(u: float, gains: ControllerGains) -> tuple[float, float]:
    """Split drive effort into (throttle, brake), each in [0, 1], never both."""
    if u > 0.0:
        return min(u / gains.u_throttle_scale, 1.0), 0.0
    if u < 0.0:
        return 0.0, min(-u / gains.u_brake_scale, 1.0)
    return 0.0, 0.0


def curvature_to_steering(kappa: float, wheelbase: float,
                          delta_max: float = 0.61) -> float:
    """Steering angle delta = atan(wheelbase * kappa), clipped to +-delta_max."""
    delta = math.atan(wheelbase * kappa)
    return max(-delta_max, min(delta_max, delta))
