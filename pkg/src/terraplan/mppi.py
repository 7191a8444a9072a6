"""Sampling-based MPC optimizer.

Each planning step samples N control sequences from four Gaussian families
around the shifted nominal plan (regular, tighter, speed-scaled, and
fixed-mean reset sequences), processes them to feasible commands, rolls them
out over the elevation map, scores traversability plus task costs, and
blends the processed sequences with exponential weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import batch as _batch
from .constraints import (AttitudeTrace, ConstraintParams, VehicleParams,
                          airtime_cost, bump_cost, roll_angle_cost,
                          rollover_cost, rollover_risk_profile)
from .kinematics import (Control, DelayConfig, FeasibilityLimits, PlanarState,
                         process_feasible, project_state, rollout)
from .terrain import ElevationMap, TerrainError, WheelFootprint, attitude


class DegenerateBatch(Exception):
    """Every sample faulted; no usable weight distribution exists."""


DEGENERATE_COST = 1.0e30


@dataclass(frozen=True)
class MppiConfig:
    """Sampler and update-law parameters.

    n_reset is the total number of reset samples, distributed round-robin
    over the three fixed means (0, 0), (0, -kappa_reset), (0, +kappa_reset).
    s_narrow scales the covariance of the narrow family; s_scale multiplies
    the nominal velocities for the scaled family.
    """
    horizon: int = 50
    n_conv: int = 640
    n_narrow: int = 192
    n_scaled: int = 160
    n_reset: int = 32
    sigma_v: float = 0.6
    sigma_kappa: float = 0.005
    s_narrow: float = 0.25
    s_scale: float = 0.5
    kappa_reset: float = 0.2
    temperature: float = 20.0
    dt: float = 0.1
    rng_seed: int = 0
    workers: int | None = None

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        if min(self.n_conv, self.n_narrow, self.n_scaled, self.n_reset) < 0 or self.n_total < 1:
            raise ValueError("family counts must be >= 0 and sum to >= 1")
        if self.temperature <= 0 or self.dt <= 0:
            raise ValueError("temperature and dt must be > 0")
        if self.sigma_v < 0 or self.sigma_kappa < 0:
            raise ValueError("sigmas must be >= 0")
        if not (0.0 < self.s_narrow <= 1.0 and 0.0 < self.s_scale <= 1.0):
            raise ValueError("s_narrow and s_scale must be in (0, 1]")

    @property
    def n_total(self) -> int:
        return self.n_conv + self.n_narrow + self.n_scaled + self.n_reset

    def family_slices(self) -> dict[str, slice]:
        a = self.n_conv
        b = a + self.n_narrow
        c = b + self.n_scaled
        return {"conventional": slice(0, a), "narrow": slice(a, b),
                "scaled": slice(b, c), "reset": slice(c, self.n_total)}


@dataclass
class NominalSequence:
    """The current best plan: an (H, 2) array of (v, kappa) rows."""
    controls: np.ndarray

    def __post_init__(self):
        self.controls = np.asarray(self.controls, dtype=np.float64).reshape(-1, 2)

    @classmethod
    def zeros(cls, horizon: int) -> "NominalSequence":
        return cls(np.zeros((horizon, 2)))

    def as_controls(self) -> list[Control]:
        return [Control(float(v), float(k)) for v, k in self.controls]


@dataclass(frozen=True)
class TaskCost:
    """Task objective evaluated alongside the traversability costs.

    The traversability terms alone give no incentive to move; closed-loop
    tasks add speed-tracking, path-tracking, and heading-alignment terms
    here, kept separate from the constraint costs.
    """
    code: int
    params: np.ndarray

    @classmethod
    def none(cls) -> "TaskCost":
        return cls(_batch.TASK_NONE, np.zeros(1))

    @classmethod
    def circle(cls, cx: float, cy: float, radius: float, v_ref: float,
               w_speed: float = 1.0, w_track: float = 50.0,
               w_heading: float = 20.0, direction: int = 1) -> "TaskCost":
        return cls(_batch.TASK_CIRCLE,
                   np.array([cx, cy, radius, v_ref, w_speed, w_track,
                             w_heading, float(direction)], dtype=np.float64))

    @classmethod
    def line(cls, px: float, py: float, heading: float, v_ref: float,
             w_speed: float = 1.0, w_track: float = 50.0,
             w_heading: float = 20.0) -> "TaskCost":
        return cls(_batch.TASK_LINE,
                   np.array([px, py, math.cos(heading), math.sin(heading),
                             v_ref, w_speed, w_track, w_heading], dtype=np.float64))

    @classmethod
    def polyline(cls, points, v_ref: float, w_speed: float = 1.0,
                 w_track: float = 50.0, w_heading: float = 20.0) -> "TaskCost":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(pts) < 2:
            raise ValueError("polyline needs at least 2 points")
        return cls(_batch.TASK_POLYLINE,
                   np.concatenate([[v_ref, w_speed, w_track, w_heading,
                                    len(pts)], pts.ravel()]))


@dataclass
class SampleBatch:
    """All per-sample arrays from one sampling + evaluation pass."""
    raw: np.ndarray          # (N, H, 2)
    processed: np.ndarray    # (N, H, 2)
    states: np.ndarray       # (N, H+1, 3)
    phi: np.ndarray          # (N, H+1)
    theta: np.ndarray        # (N, H+1)
    rr: np.ndarray           # (N, H)
    tau: np.ndarray          # (N, H)
    costs: np.ndarray        # (N,)
    components: np.ndarray   # (N, 5): rollover, airtime, bump, task, out-of-map


@dataclass
class PlanDiagnostics:
    command: Control
    min_cost: float
    mean_cost: float
    family_best: dict[str, float]
    win_index: int
    win_rr: np.ndarray
    win_tau: np.ndarray
    projected: PlanarState


def sample_raw(nominal: NominalSequence, config: MppiConfig, iteration: int) -> np.ndarray:
    """Draw the full (N, H, 2) raw control batch for one planning iteration."""
    raw = np.empty((config.n_total, config.horizon, 2))
    _batch.sample_kernel(nominal.controls, config.n_conv, config.n_narrow,
                         config.n_scaled, config.n_reset,
                         config.sigma_v, config.sigma_kappa,
                         math.sqrt(config.s_narrow), config.s_scale,
                         config.kappa_reset,
                         np.uint64(config.rng_seed & 0xFFFFFFFFFFFFFFFF),
                         np.uint64(iteration), raw)
    return raw


def evaluate_batch(raw: np.ndarray, prev: Control, start: PlanarState,
                   emap: ElevationMap, footprint: WheelFootprint,
                   limits: FeasibilityLimits, vehicle: VehicleParams,
                   cparams: ConstraintParams, task: TaskCost, dt: float,
                   baseline_roll_limit: float | None = None) -> SampleBatch:
    """Process, roll out, and score every raw sample against the map."""
    n, h = raw.shape[0], raw.shape[1]
    out = SampleBatch(
        raw=raw,
        processed=np.empty((n, h, 2)),
        states=np.empty((n, h + 1, 3)),
        phi=np.empty((n, h + 1)),
        theta=np.empty((n, h + 1)),
        rr=np.empty((n, h)),
        tau=np.empty((n, h)),
        costs=np.empty(n),
        components=np.empty((n, 5)),
    )
    _batch.evaluate_kernel(
        raw, prev.v, prev.kappa,
        limits.dv_max, limits.dkappa_max, limits.v_min, limits.kappa_max,
        limits.v_cap, limits.v_floor,
        start.x, start.y, start.psi, dt,
        emap.heights, emap.origin_x, emap.origin_y, emap.cell_size,
        emap.n_cols, emap.n_rows,
        0.5 * footprint.wheelbase, 0.5 * footprint.track_width,
        footprint.wheelbase, footprint.track_width,
        vehicle.p1, vehicle.p2, vehicle.p3, vehicle.i22, vehicle.g,
        cparams.rr_max, cparams.tau_min_res, cparams.tau_max_res,
        cparams.w1, cparams.w2, cparams.w3,
        baseline_roll_limit is not None,
        0.0 if baseline_roll_limit is None else baseline_roll_limit,
        task.code, task.params,
        out.processed, out.states, out.phi, out.theta, out.rr, out.tau,
        out.costs, out.components)
    return out


def evaluate_sequence_reference(raw_seq: np.ndarray, prev: Control,
                                start: PlanarState, emap: ElevationMap,
                                footprint: WheelFootprint,
                                limits: FeasibilityLimits,
                                vehicle: VehicleParams,
                                cparams: ConstraintParams, task: TaskCost,
                                dt: float,
                                baseline_roll_limit: float | None = None):
    """Single-sequence evaluation composed from the module-level operations.

    Slow path used to cross-check the batched kernel; mirrors its handling
    of unmapped rollout points (fixed penalty, attitude held).
    """
    controls = process_feasible([(float(v), float(k)) for v, k in raw_seq],
                                prev, limits)
    states = rollout(start, controls, dt)
    h = len(controls)
    phi = np.zeros(h + 1)
    theta = np.zeros(h + 1)
    oob = 0
    for k, st in enumerate(states):
        try:
            att = attitude(emap, st.x, st.y, st.psi, footprint)
            phi[k], theta[k] = att.roll, att.pitch
        except TerrainError:
            oob += 1
            if k > 0:
                phi[k], theta[k] = phi[k - 1], theta[k - 1]
    v = np.array([u.v for u in controls])
    kap = np.array([u.kappa for u in controls])
    trace = AttitudeTrace(phi=phi, theta=theta, v=v, kappa=kap, dt=dt)
    if baseline_roll_limit is None:
        c_roll = rollover_cost(trace, cparams)[-1]
    else:
        c_roll = roll_angle_cost(trace, baseline_roll_limit)[-1]
    c_air = airtime_cost(trace, vehicle, cparams)[-1]
    c_bump = bump_cost(trace, vehicle, cparams)[-1]
    c_task = 0.0
    for k in range(h):
        c_task += _batch._task_cost(task.code, task.params,
                                    states[k + 1].x, states[k + 1].y,
                                    states[k + 1].psi, v[k])
    total = (cparams.w1 * c_roll + cparams.w2 * c_air + cparams.w3 * c_bump
             + c_task + oob * _batch.OOB_PENALTY)
    return total, trace, controls, rollover_risk_profile(trace)


def mppi_weights(costs: np.ndarray, temperature: float) -> np.ndarray:
    """Exponential weights of min-shifted costs, normalized to sum to one."""
    costs = np.asarray(costs, dtype=np.float64)
    finite = costs < DEGENERATE_COST
    if not np.any(finite & np.isfinite(costs)):
        raise DegenerateBatch("no sample produced a usable cost")
    shifted = costs - costs.min()
    w = np.exp(-shifted / temperature)
    return w / w.sum()


def mppi_update(nominal: NominalSequence, batch: SampleBatch,
                temperature: float, prev: Control,
                limits: FeasibilityLimits) -> tuple[Control, NominalSequence]:
    """Blend processed samples by weight; re-process the blend as a guard.

    The convex combination of feasible sequences can break the
    steering-freeze rule at low speed, so the averaged plan goes through
    feasibility processing once more before the first step is issued.
    """
    w = mppi_weights(batch.costs, temperature)
    blended = np.einsum("i,ihc->hc", w, batch.processed)
    guarded = process_feasible([(float(v), float(k)) for v, k in blended],
                               prev, limits)
    arr = np.array([[u.v, u.kappa] for u in guarded])
    return guarded[0], NominalSequence(arr)


def shift(nominal: NominalSequence) -> NominalSequence:
    """Receding-horizon shift: drop step 0, repeat the final step."""
    c = nominal.controls
    if len(c) < 2:
        raise ValueError("need horizon >= 2 to shift")
    return NominalSequence(np.vstack([c[1:], c[-1:]]))


class Planner:
    """Receding-horizon planner owning the nominal plan and sample streams.

    One planner instance serves one control loop; the elevation map it reads
    is immutable, so several planners may share it.
    """

    def __init__(self, emap: ElevationMap, footprint: WheelFootprint,
                 limits: FeasibilityLimits, vehicle: VehicleParams,
                 cparams: ConstraintParams, config: MppiConfig,
                 task: TaskCost | None = None,
                 baseline_roll_limit: float | None = None):
        cparams.check_vehicle(vehicle)
        self.emap = emap
        self.footprint = footprint
        self.limits = limits
        self.vehicle = vehicle
        self.cparams = cparams
        self.config = config
        self.task = task if task is not None else TaskCost.none()
        self.baseline_roll_limit = baseline_roll_limit
        self.nominal = NominalSequence.zeros(config.horizon)
        self.prev_command = Control(0.0, 0.0)
        self.iteration = 0
        self.workers = _batch.resolve_workers(config.workers)

    def seed_nominal(self, v: float, kappa: float) -> None:
        self.nominal = NominalSequence(
            np.tile([v, kappa], (self.config.horizon, 1)))
        self.prev_command = Control(v, kappa)

    def plan_step(self, measured: PlanarState,
                  delay: DelayConfig | None = None) -> tuple[Control, PlanDiagnostics]:
        """One full plan iteration from a measured (pre-projection) state."""
        numba.set_num_threads(self.workers)
        start = project_state(measured, delay, self.config.dt) if delay else measured
        raw = sample_raw(self.nominal, self.config, self.iteration)
        batch = evaluate_batch(raw, self.prev_command, start, self.emap,
                               self.footprint, self.limits, self.vehicle,
                               self.cparams, self.task, self.config.dt,
                               self.baseline_roll_limit)
        command, new_nominal = mppi_update(self.nominal, batch,
                                           self.config.temperature,
                                           self.prev_command, self.limits)
        win = int(np.argmin(batch.costs))
        fam_best = {name: float(batch.costs[sl].min()) if batch.costs[sl].size else math.nan
                    for name, sl in self.config.family_slices().items()}
        diag = PlanDiagnostics(
            command=command,
            min_cost=float(batch.costs.min()),
            mean_cost=float(batch.costs.mean()),
            family_best=fam_best,
            win_index=win,
            win_rr=batch.rr[win].copy(),
            win_tau=batch.tau[win].copy(),
            projected=start,
        )
        self.nominal = shift(new_nominal)
        self.prev_command = command
        self.iteration += 1
        return command, diag
