"""Physics-based traversability limits: rollover and ditch residual torques.

All cost-path quantities are mass-specific (torque per unit mass, m^2/s^2).
Attitude angles follow the conventions documented in terrain.py.

Two independent routes exist for the rollover check and are tested against
each other:
  * the closed-form lateral bound |P3 (v^2 k + g sin(phi))| < P2 g cos(phi)
    and its normalized form, rollover_risk;
  * a full 3-D torque balance about either wheel line (rollover_margin_3d)
    evaluated with vector cross products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81


class SteepRoll(Exception):
    """Roll angle out of the computable range (|phi| >= pi/2)."""


class TooShort(Exception):
    """Sequence too short for finite differencing."""


@dataclass(frozen=True)
class VehicleParams:
    """Mass-normalized geometry of the vehicle.

    p2 is the lateral distance from either wheel line to the center of mass,
    p3 its height above the wheel-contact plane, p1 the longitudinal distance
    from the rear axle to the center of mass, and i22 the mass-specific pitch
    moment of inertia. Mass m is carried only for dimensional fidelity of the
    torque oracle; no cost formula uses it.
    """
    m: float = 900.0
    p1: float = 1.1
    p2: float = 0.8
    p3: float = 0.9
    i22: float = 2.0
    g: float = GRAVITY

    def __post_init__(self):
        if min(self.p1, self.p2, self.p3, self.g) <= 0 or self.i22 < 0:
            raise ValueError("vehicle geometry must be positive (i22 >= 0)")

    @property
    def hard_rr_bound(self) -> float:
        """Lateral bound above which no wheel-support solution exists."""
        return self.g * self.p2 / self.p3


@dataclass(frozen=True)
class ConstraintParams:
    """Tunable traversability bounds and cost weights."""
    rr_max: float = 3.4
    tau_min_res: float = -25.0
    tau_max_res: float = -2.0
    w1: float = 1000.0   # rollover
    w2: float = 1000.0   # airtime
    w3: float = 1000.0   # bump

    def __post_init__(self):
        if not self.tau_min_res < self.tau_max_res < 0.0:
            raise ValueError("need tau_min_res < tau_max_res < 0")
        if self.rr_max <= 0 or min(self.w1, self.w2, self.w3) < 0:
            raise ValueError("rr_max must be > 0 and weights >= 0")

    def check_vehicle(self, vehicle: VehicleParams) -> None:
        if self.rr_max > vehicle.hard_rr_bound:
            raise ValueError(
                f"rr_max {self.rr_max} exceeds hard bound g*p2/p3 = {vehicle.hard_rr_bound:.3f}")


def rollover_risk(v, kappa, phi):
    """Normalized lateral rollover measure |v^2 k - g sin(phi)| / cos(phi).

    Accepts scalars or broadcastable arrays. Risk is reduced when the turn
    direction and the downhill side agree (on-camber) and reinforced when
    they oppose (off-camber).
    """
    phi = np.asarray(phi, dtype=np.float64)
    if np.any(np.abs(phi) >= math.pi / 2):
        raise SteepRoll("roll angle beyond +-pi/2")
    rr = np.abs(np.asarray(v, dtype=np.float64) ** 2 * kappa
                - GRAVITY * np.sin(phi)) / np.cos(phi)
    return float(rr) if rr.ndim == 0 else rr


def rollover_margins_scalar(v, kappa, phi, params: VehicleParams):
    """Closed-form support margins (left, right); negative means supported.

    Both margins negative is equivalent to
    |p3 (v^2 kappa + g sin(phi))| < p2 g cos(phi).
    """
    lat = params.p3 * (np.asarray(v, dtype=np.float64) ** 2 * kappa
                       + params.g * np.sin(phi))
    hold = params.p2 * params.g * np.cos(phi)
    return lat - hold, -lat - hold


def rollover_pivot_torque(v, kappa, phi, theta=0.0, vdot=0.0,
                          params: VehicleParams = VehicleParams(),
                          side: str = "left"):
    """Residual-torque roll component about one wheel line, per unit mass.

    Full vector evaluation of the torque balance in the body frame: gravity
    resolved through (roll, pitch), path-frame acceleration v_dot b1 +
    v (omega x b1), and the center of mass offset to the chosen pivot line.
    The forward component of the roll inertia term is taken as negligible,
    which also removes any v_dot dependence (the cross product of b1 with
    itself vanishes). Supported wheels require a negative value about the
    left line and a positive value about the right line.
    """
    v = np.asarray(v, dtype=np.float64)
    kappa = np.asarray(kappa, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(np.abs(phi) >= math.pi / 2):
        raise SteepRoll("roll angle beyond +-pi/2")
    shape = np.broadcast_shapes(v.shape, kappa.shape, phi.shape, theta.shape)
    v, kappa, phi, theta = (np.broadcast_to(a, shape) for a in (v, kappa, phi, theta))

    if side == "left":
        p2 = -params.p2
    elif side == "right":
        p2 = params.p2
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    r = np.stack(np.broadcast_arrays(np.zeros(shape),
                                     np.full(shape, p2),
                                     np.full(shape, params.p3)), axis=-1)
    g = params.g
    g_body = np.stack([g * np.sin(theta),
                       g * np.cos(theta) * np.sin(phi),
                       -g * np.cos(theta) * np.cos(phi)], axis=-1)
    omega = np.stack([np.zeros(shape), np.zeros(shape), -v * kappa], axis=-1)
    b1 = np.zeros(shape + (3,))
    b1[..., 0] = 1.0
    accel = vdot * b1 + v[..., None] * np.cross(omega, b1)
    torque = -np.cross(r, g_body - accel)[..., 0]
    return float(torque) if torque.ndim == 0 else torque


def rollover_margin_3d(v, kappa, phi, theta=0.0, vdot=0.0,
                       params: VehicleParams = VehicleParams(),
                       side: str = "left"):
    """Support margin from the 3-D torque balance; negative means supported."""
    tq = rollover_pivot_torque(v, kappa, phi, theta, vdot, params, side)
    return tq if side == "left" else -tq


def pitch_rates(theta, dt: float):
    """Forward-difference pitch rate and acceleration of a pitch sequence.

    omega2(k) = (theta(k+1) - theta(k)) / dt and alpha2(k) the forward
    difference of omega2. Both are padded by repeating their last computable
    value so they align with the input length.
    """
    theta = np.asarray(theta, dtype=np.float64)
    n = len(theta)
    if n < 3:
        raise TooShort(f"need at least 3 samples, got {n}")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    w_core = np.diff(theta) / dt              # length n-1
    a_core = np.diff(w_core) / dt             # length n-2
    omega2 = np.append(w_core, w_core[-1])
    alpha2 = np.concatenate([a_core, [a_core[-1], a_core[-1]]])
    return omega2, alpha2


@dataclass
class AttitudeTrace:
    """Attitude and control samples along one rollout.

    phi and theta cover the H+1 rollout states; v and kappa the H controls.
    Pitch rates are derived on construction and padded to H+1.
    """
    phi: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    kappa: np.ndarray
    dt: float
    omega2: np.ndarray = field(init=False)
    alpha2: np.ndarray = field(init=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.kappa = np.asarray(self.kappa, dtype=np.float64)
        if len(self.phi) != len(self.theta) or len(self.v) != len(self.kappa):
            raise ValueError("inconsistent trace lengths")
        if len(self.phi) != len(self.v) + 1:
            raise ValueError("need one more attitude sample than controls")
        self.omega2, self.alpha2 = pitch_rates(self.theta, self.dt)

    @property
    def horizon(self) -> int:
        return len(self.v)


def rollover_risk_profile(trace: AttitudeTrace) -> np.ndarray:
    """Per-step rollover risk over the horizon."""
    return rollover_risk(trace.v, trace.kappa, trace.phi[:-1])


def rollover_cost(trace: AttitudeTrace, params: ConstraintParams) -> np.ndarray:
    """Cumulative sum of rollover-risk violations over the horizon."""
    rr = rollover_risk_profile(trace)
    return np.cumsum(np.where(rr > params.rr_max, rr, 0.0))


def ditch_torque_profile(trace: AttitudeTrace, params: VehicleParams) -> np.ndarray:
    """Pitch residual torque per unit mass at each horizon step."""
    h = trace.horizon
    th = trace.theta[:h]
    return (params.i22 * trace.alpha2[:h]
            + params.p1 * trace.v * trace.omega2[:h]
            - params.p3 * params.g * np.sin(th)
            - params.p1 * params.g * np.cos(th))


def ditch_torque(trace: AttitudeTrace, params: VehicleParams, k: int) -> float:
    """Pitch residual torque at one step; negative means front wheels loaded."""
    return float(ditch_torque_profile(trace, params)[k])


def airtime_cost(trace: AttitudeTrace, vehicle: VehicleParams,
                 params: ConstraintParams) -> np.ndarray:
    """Cumulative violations of the upper torque bound (front wheels unloading)."""
    tau = ditch_torque_profile(trace, vehicle)
    d = tau - params.tau_max_res
    return np.cumsum(np.where(d > 0.0, d, 0.0))


def bump_cost(trace: AttitudeTrace, vehicle: VehicleParams,
              params: ConstraintParams) -> np.ndarray:
    """Cumulative violations of the lower torque bound (front-impact loads)."""
    tau = ditch_torque_profile(trace, vehicle)
    d = params.tau_min_res - tau
    return np.cumsum(np.where(d > 0.0, d, 0.0))


def roll_angle_cost(trace: AttitudeTrace, limit_rad: float) -> np.ndarray:
    """Cumulative excess of |roll| above a fixed threshold (baseline planner)."""
    ex = np.abs(trace.phi[:trace.horizon]) - limit_rad
    return np.cumsum(np.where(ex > 0.0, ex, 0.0))


def ditch_torque_eq6(v, vdot, theta, omega2, alpha2,
                     params: VehicleParams = VehicleParams()):
    """Strictly-pitching residual torque in its derivation form.

    This form keeps the v_dot term and uses the opposite pitch-rotation
    convention from ditch_torque_profile: negating it after mapping the pitch
    rates into that convention (omega2 -> -omega2, alpha2 -> -alpha2) and
    dropping v_dot reproduces the deployed formula exactly; see tests.
    """
    return (params.i22 * np.asarray(alpha2, dtype=np.float64)
            + params.p1 * (np.asarray(v) * omega2 + params.g * np.cos(theta))
            + params.p3 * (vdot + params.g * np.sin(theta)))
