"""Planar bicycle-kinematics rollouts, feasibility processing, delay projection.

The planner's control is (v, kappa): linear velocity and steering curvature.
The discrete update is the curvature-unicycle form of the bicycle model,
integrated with forward Euler at the planner time step:

    x' = x + v cos(psi) dt,  y' = y + v sin(psi) dt,  psi' = psi + v kappa dt
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class PlanarState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0


@dataclass(frozen=True)
class Control:
    v: float = 0.0
    kappa: float = 0.0


@dataclass(frozen=True)
class FeasibilityLimits:
    """Per-step rate limits and absolute caps for processed controls.

    v_floor defaults to 0 (experiments never reverse); set it to -v_cap to
    allow symmetric reverse.
    """
    dv_max: float = 0.2
    dkappa_max: float = 0.03
    v_min: float = 0.1
    kappa_max: float = 0.25
    v_cap: float = 12.0
    v_floor: float = 0.0

    def __post_init__(self):
        if min(self.dv_max, self.dkappa_max, self.v_min, self.kappa_max, self.v_cap) <= 0:
            raise ValueError("feasibility limits must be strictly positive")
        if self.v_floor > self.v_cap:
            raise ValueError("v_floor must not exceed v_cap")


@dataclass
class DelayConfig:
    """Actuation delay: commands take effect tau planner steps after issue.

    pending holds the tau most recently issued controls, oldest first.
    """
    tau: int = 0
    pending: list[Control] = field(default_factory=list)

    def push(self, u: Control) -> Control:
        """Queue a newly issued control; pop and return the one now active."""
        if self.tau == 0:
            return u
        self.pending.append(u)
        while len(self.pending) < self.tau:
            self.pending.insert(0, Control(0.0, 0.0))
        return self.pending.pop(0)


def step(state: PlanarState, u: Control, dt: float) -> PlanarState:
    """Advance one forward-Euler step."""
    return PlanarState(
        x=state.x + u.v * math.cos(state.psi) * dt,
        y=state.y + u.v * math.sin(state.psi) * dt,
        psi=state.psi + u.v * u.kappa * dt,
    )


def rollout(state: PlanarState, controls, dt: float) -> list[PlanarState]:
    """States visited applying the control sequence; element 0 is the input."""
    out = [state]
    for u in controls:
        state = step(state, u, dt)
        out.append(state)
    return out


def rollout_arrays(x0: float, y0: float, psi0: float,
                   v: np.ndarray, kappa: np.ndarray, dt: float):
    """Array rollout of one control sequence; returns (x, y, psi) length H+1."""
    h = len(v)
    x = np.empty(h + 1)
    y = np.empty(h + 1)
    psi = np.empty(h + 1)
    x[0], y[0], psi[0] = x0, y0, psi0
    for k in range(h):
        x[k + 1] = x[k] + v[k] * math.cos(psi[k]) * dt
        y[k + 1] = y[k] + v[k] * math.sin(psi[k]) * dt
        psi[k + 1] = psi[k] + v[k] * kappa[k] * dt
    return x, y, psi


def _clip(a: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, a))


def process_feasible(raw, prev: Control, limits: FeasibilityLimits) -> list[Control]:
    """Clip a raw (v, kappa) sequence to feasible per-step changes.

    Velocity changes are limited to +-dv_max per step and capped to
    [v_floor, v_cap]. Curvature is frozen at its previous value while
    |v| < v_min (no steering at standstill), otherwise limited to
    +-dkappa_max per step and capped to +-kappa_max. The previous issued
    control seeds step 0.
    """
    v_prev, k_prev = prev.v, prev.kappa
    out = []
    for rv, rk in raw:
        v = _clip(rv, v_prev - limits.dv_max, v_prev + limits.dv_max)
        v = _clip(v, limits.v_floor, limits.v_cap)
        if abs(v) < limits.v_min:
            k = k_prev
        else:
            k = _clip(rk, k_prev - limits.dkappa_max, k_prev + limits.dkappa_max)
            k = _clip(k, -limits.kappa_max, limits.kappa_max)
        out.append(Control(v, k))
        v_prev, k_prev = v, k
    return out


def project_state(state: PlanarState, delay: DelayConfig, dt: float) -> PlanarState:
    """State after the issued-but-unexecuted controls run; identity at tau=0."""
    if not delay.pending:
        return state
    return rollout(state, delay.pending, dt)[-1]
