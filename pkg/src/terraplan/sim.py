"""Closed-loop plant, scripted experiment tasks, and ground-truth diagnostics.

The plant is a ground-following vehicle with first-order longitudinal
dynamics driven by throttle/brake, steered by a front steering angle, and
subject to an actuation delay measured in planner steps. The planner runs at
its own (coarser) period; the low-level controller and plant integrate at
the plant period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import (ConstraintParams, VehicleParams, pitch_rates,
                          rollover_risk)
from .kinematics import Control, DelayConfig, PlanarState, wrap_angle
from .lowlevel import (ActuatorCommand, ControllerGains, ControllerState,
                       actuator_map, curvature_to_steering, speed_control)
from .mppi import MppiConfig, Planner, TaskCost
from .terrain import (ElevationMap, TerrainError, TerrainSpec, WheelFootprint,
                      attitude, generate_terrain)

LOG_HEADER = "t,x,y,psi,v_cmd,kappa_cmd,v_actual,roll,pitch,rr,tau_ditch,throttle,brake,steer"


class EpisodeFailure(Exception):
    pass


@dataclass(frozen=True)
class PlantParams:
    """Ground-truth vehicle response parameters."""
    wheelbase: float = 2.4
    track_width: float = 1.6
    drive_gain: float = 4.0    # m/s^2 at full throttle
    brake_gain: float = 6.0    # m/s^2 at full brake
    drag: float = 0.05         # 1/s
    dt: float = 0.02
    delay_steps: int = 2       # planner steps between issue and execution

    def __post_init__(self):
        if min(self.drive_gain, self.brake_gain, self.dt) <= 0 or self.drag < 0:
            raise ValueError("plant gains and dt must be positive")
        if self.delay_steps < 0:
            raise ValueError("delay_steps must be >= 0")

    @property
    def footprint(self) -> WheelFootprint:
        return WheelFootprint(self.wheelbase, self.track_width)


@dataclass
class PlantState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    v: float = 0.0
    controller: ControllerState = field(default_factory=ControllerState)

    @property
    def pose(self) -> PlanarState:
        return PlanarState(self.x, self.y, self.psi)


def step_plant(state: PlantState, command: ActuatorCommand, emap: ElevationMap,
               params: PlantParams, dt: float) -> PlantState:
    """Advance the plant one step; raises EpisodeFailure off the map.

    Longitudinal: v_dot = drive*throttle - brake*|cmd| + g sin(theta) - drag v,
    where theta > 0 (nose down) accelerates and theta < 0 (nose up) brakes,
    i.e. gravity opposes motion uphill. Pose follows bicycle kinematics with
    curvature tan(steer)/wheelbase; height and attitude snap to the terrain.
    """
    try:
        att = attitude(emap, state.x, state.y, state.psi, params.footprint)
    except TerrainError as e:
        raise EpisodeFailure(f"left mapped terrain at ({state.x:.2f}, {state.y:.2f})") from e
    accel = (params.drive_gain * command.throttle
             - params.brake_gain * command.brake * (1.0 if state.v > 0 else 0.0)
             + 9.81 * math.sin(att.pitch)
             - params.drag * state.v)
    kappa = math.tan(command.steer) / params.wheelbase
    v = state.v
    return PlantState(
        x=state.x + v * math.cos(state.psi) * dt,
        y=state.y + v * math.sin(state.psi) * dt,
        psi=state.psi + v * kappa * dt,
        v=max(0.0, v + accel * dt),
        controller=state.controller,
    )


@dataclass
class TrajectoryLog:
    """Per-plant-step record of one episode."""
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    v_cmd: np.ndarray
    kappa_cmd: np.ndarray
    v_actual: np.ndarray
    roll: np.ndarray
    pitch: np.ndarray
    rr: np.ndarray
    tau_ditch: np.ndarray
    throttle: np.ndarray
    brake: np.ndarray
    steer: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    COLUMNS = LOG_HEADER.split(",")

    def write_csv(self, path: str) -> None:
        cols = [getattr(self, c) for c in self.COLUMNS]
        with open(path, "w") as f:
            f.write(LOG_HEADER + "\n")
            for row in zip(*cols):
                f.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def read_csv(cls, path: str) -> "TrajectoryLog":
        with open(path) as f:
            header = f.readline().strip()
            if header != LOG_HEADER:
                raise ValueError(f"unexpected log header: {header!r}")
            rows = []
            for ln, line in enumerate(f, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != len(cls.COLUMNS):
                    raise ValueError(f"malformed log row at line {ln}")
                try:
                    rows.append([float(p) for p in parts])
                except ValueError as e:
                    raise ValueError(f"malformed log row at line {ln}: {e}") from e
        if not rows:
            raise ValueError("log has no data rows")
        arr = np.array(rows)
        return cls(**{c: arr[:, i] for i, c in enumerate(cls.COLUMNS)})


@dataclass
class Diagnostics:
    """Ground-truth constraint quantities recomputed from an executed path."""
    rr: np.ndarray            # per log step
    kappa_exec: np.ndarray    # per log step
    tau: np.ndarray           # per control-rate sample
    tau_index: np.ndarray     # log-step index of each tau sample
    tau_full: np.ndarray      # tau repeated to per-step length


def ground_truth_diagnostics(x, y, psi, v, emap: ElevationMap,
                             footprint: WheelFootprint, vehicle: VehicleParams,
                             dt: float, stride: int = 1,
                             roll=None, pitch=None) -> Diagnostics:
    """Recompute rollover and pitch-torque measures from an executed path.

    Executed curvature comes from heading differencing, never from the
    commands. Pitch rates are differenced at the control rate (stride plant
    steps): finer differencing only amplifies interpolation-kink spikes that
    the planner never reasons about.
    """
    n = len(x)
    if roll is None or pitch is None:
        roll = np.empty(n)
        pitch = np.empty(n)
        for i in range(n):
            att = attitude(emap, x[i], y[i], psi[i], footprint)
            roll[i], pitch[i] = att.roll, att.pitch
    kappa = np.zeros(n)
    for i in range(n - 1):
        ds = v[i] * dt
        if ds > 1e-3:
            kappa[i] = wrap_angle(psi[i + 1] - psi[i]) / ds
    if n >= 2:
        kappa[-1] = kappa[-2]
    rr = rollover_risk(v, kappa, roll)

    idx = np.arange(0, n, stride)
    if len(idx) >= 3:
        om2, al2 = pitch_rates(pitch[idx], dt * stride)
        tau = (vehicle.i22 * al2 + vehicle.p1 * v[idx] * om2
               - vehicle.p3 * vehicle.g * np.sin(pitch[idx])
               - vehicle.p1 * vehicle.g * np.cos(pitch[idx]))
    else:
        tau = np.full(len(idx), -vehicle.p1 * vehicle.g)
    tau_full = np.repeat(tau, stride)[:n]
    return Diagnostics(rr=rr, kappa_exec=kappa, tau=tau, tau_index=idx,
                       tau_full=tau_full)


@dataclass
class TaskSpec:
    """A scripted closed-loop experiment."""
    kind: str = "flat_circle"   # flat_circle | hill_circle | ditch_cross | slalom
    terrain: TerrainSpec = field(default_factory=TerrainSpec)
    duration: float = 40.0
    v_ref: float = 10.0
    v0: float = 3.0
    radius: float = 15.0
    direction: int = 1          # +1 counter-clockwise, -1 clockwise
    center_x: float = 0.0
    center_y: float = 0.0
    start_offset: float = 12.0  # ditch/slalom: distance ahead of the feature
    waypoints: tuple = ()
    w_speed: float = 1.0
    w_track: float = 50.0
    w_heading: float = 20.0
    baseline_roll_penalty: bool = False
    roll_limit_deg: float = 20.0
    mppi: MppiConfig = field(default_factory=MppiConfig)
    constraints: ConstraintParams = field(default_factory=ConstraintParams)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    gains: ControllerGains = field(default_factory=ControllerGains)
    plant: PlantParams = field(default_factory=PlantParams)
    limits: "FeasibilityLimits" = None  # see __post_init__

    def __post_init__(self):
        from .kinematics import FeasibilityLimits
        if self.limits is None:
            self.limits = FeasibilityLimits()
        if self.kind in ("flat_circle", "hill_circle") and self.radius <= 0:
            raise ValueError("circle tasks need radius > 0")
        if self.kind == "slalom" and len(self.waypoints) < 4:
            raise ValueError("slalom needs at least two waypoints")

    def build(self) -> tuple[TaskCost, PlanarState, Control]:
        """Task cost, start pose, and initial command for this task."""
        if self.kind in ("flat_circle", "hill_circle"):
            task = TaskCost.circle(self.center_x, self.center_y, self.radius,
                                   self.v_ref, self.w_speed, self.w_track,
                                   self.w_heading, self.direction)
            start = PlanarState(self.center_x, self.center_y - self.direction * self.radius, 0.0)
            u0 = Control(self.v0, self.direction / self.radius)
        elif self.kind == "ditch_cross":
            x0 = -(self.terrain.half_width + self.start_offset)
            task = TaskCost.line(0.0, 0.0, 0.0, self.v_ref, self.w_speed,
                                 self.w_track, self.w_heading)
            start = PlanarState(x0, 0.0, 0.0)
            u0 = Control(self.v0, 0.0)
        elif self.kind == "slalom":
            pts = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 2)
            task = TaskCost.polyline(pts, self.v_ref, self.w_speed,
                                     self.w_track, self.w_heading)
            head = math.atan2(pts[1, 1] - pts[0, 1], pts[1, 0] - pts[0, 0])
            start = PlanarState(pts[0, 0], pts[0, 1], head)
            u0 = Control(self.v0, 0.0)
        else:
            raise ValueError(f"unknown task kind {self.kind!r}")
        return task, start, u0


@dataclass
class MetricsReport:
    values: dict

    def write(self, path: str) -> None:
        with open(path, "w") as f:
            for k in sorted(self.values):
                f.write(f"{k}={self.values[k]}\n")

    @classmethod
    def read(cls, path: str) -> "MetricsReport":
        vals = {}
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or "=" not in line:
                    continue
                k, v = line.split("=", 1)
                vals[k] = v
        return cls(vals)


def task_preset(kind: str, seed: int = 0) -> TaskSpec:
    """Ready-to-run experiment configurations.

    These encode the tuned desk-scale setups: circle tasks keep a small
    command floor so the optimizer cannot latch onto a standstill, and the
    ditch task uses a softer temperature plus heavy band weights so the
    executed pitch torque holds its margin.
    """
    from .kinematics import FeasibilityLimits
    kind = kind.replace("-", "_")
    if kind == "flat_circle":
        return TaskSpec(
            kind="flat_circle",
            terrain=TerrainSpec(kind="flat", extent=80.0, cell_size=0.5),
            duration=40.0, v_ref=10.0, v0=3.0, radius=15.0,
            limits=FeasibilityLimits(v_floor=0.5),
            mppi=MppiConfig(rng_seed=seed))
    if kind == "hill_circle":
        return TaskSpec(
            kind="hill_circle",
            terrain=TerrainSpec(kind="incline", angle_deg=10.0, azimuth_deg=0.0,
                                extent=120.0, cell_size=0.5),
            duration=100.0, v_ref=10.0, v0=3.0, radius=15.0,
            limits=FeasibilityLimits(v_floor=0.5),
            mppi=MppiConfig(rng_seed=seed))
    if kind == "ditch_cross":
        return TaskSpec(
            kind="ditch_cross",
            terrain=TerrainSpec(kind="v_ditch", depth=1.0, half_width=4.2,
                                wall_angle_deg=15.0, axis_azimuth_deg=90.0,
                                extent=120.0, cell_size=0.25, smooth=1.2),
            duration=25.0, v_ref=5.0, v0=5.0, w_speed=0.5,
            constraints=ConstraintParams(tau_min_res=-18.0, tau_max_res=-6.0,
                                         w2=10000.0, w3=10000.0),
            limits=FeasibilityLimits(v_cap=5.0),
            mppi=MppiConfig(rng_seed=seed, temperature=100.0))
    if kind == "slalom":
        return TaskSpec(
            kind="slalom",
            terrain=TerrainSpec(kind="sine_bumps", amplitude=0.25, wavelength=12.0,
                                extent=160.0, cell_size=0.5),
            waypoints=(-40.0, 0.0, -20.0, 6.0, 0.0, -6.0, 20.0, 6.0, 40.0, 0.0),
            duration=30.0, v_ref=6.0, v0=3.0,
            limits=FeasibilityLimits(v_floor=0.5),
            mppi=MppiConfig(rng_seed=seed))
    raise ValueError(f"unknown task kind {kind!r}")


def run_task(spec: TaskSpec) -> tuple[TrajectoryLog, MetricsReport]:
    """Run one closed-loop episode: planner at its rate, plant at its own."""
    emap = generate_terrain(spec.terrain)
    footprint = spec.plant.footprint
    task, start, u0 = spec.build()
    planner = Planner(emap, footprint, spec.limits, spec.vehicle,
                      spec.constraints, spec.mppi, task=task,
                      baseline_roll_limit=(math.radians(spec.roll_limit_deg)
                                           if spec.baseline_roll_penalty else None))
    planner.seed_nominal(u0.v, u0.kappa)

    steps_per_plan = int(round(spec.mppi.dt / spec.plant.dt))
    if steps_per_plan < 1 or abs(steps_per_plan * spec.plant.dt - spec.mppi.dt) > 1e-9:
        raise ValueError("plant dt must evenly divide planner dt")
    n_steps = int(round(spec.duration / spec.plant.dt))

    delay = DelayConfig(tau=spec.plant.delay_steps,
                        pending=[u0] * spec.plant.delay_steps)
    state = PlantState(x=start.x, y=start.y, psi=start.psi, v=spec.v0)
    active = u0
    rows = {c: np.zeros(n_steps) for c in TrajectoryLog.COLUMNS}
    failure = ""
    filled = 0
    for i in range(n_steps):
        if i % steps_per_plan == 0:
            cmd, _ = planner.plan_step(state.pose, delay)
            active = delay.push(cmd)
        try:
            att = attitude(emap, state.x, state.y, state.psi, footprint)
        except TerrainError:
            failure = "out_of_bounds"
            break
        u, ctrl = speed_control(state.v, active.v, att.pitch, spec.gains,
                                state.controller, spec.plant.dt)
        throttle, brake = actuator_map(u, spec.gains)
        steer = curvature_to_steering(active.kappa, spec.plant.wheelbase,
                                      spec.gains.delta_max)
        rows["t"][i] = i * spec.plant.dt
        rows["x"][i] = state.x
        rows["y"][i] = state.y
        rows["psi"][i] = state.psi
        rows["v_cmd"][i] = active.v
        rows["kappa_cmd"][i] = active.kappa
        rows["v_actual"][i] = state.v
        rows["roll"][i] = att.roll
        rows["pitch"][i] = att.pitch
        rows["throttle"][i] = throttle
        rows["brake"][i] = brake
        rows["steer"][i] = steer
        filled = i + 1
        try:
            state = step_plant(state, ActuatorCommand(throttle, brake, steer),
                               emap, spec.plant, spec.plant.dt)
        except EpisodeFailure as e:
            failure = str(e)
            break
        state.controller = ctrl

    rows = {c: rows[c][:filled] for c in rows}
    diag = ground_truth_diagnostics(rows["x"], rows["y"], rows["psi"],
                                    rows["v_actual"], emap, footprint,
                                    spec.vehicle, spec.plant.dt,
                                    stride=steps_per_plan,
                                    roll=rows["roll"], pitch=rows["pitch"])
    rows["rr"] = diag.rr
    rows["tau_ditch"] = diag.tau_full
    log = TrajectoryLog(**rows)
    metrics = compute_metrics(spec, log, diag)
    if failure:
        metrics.values["failed"] = 1
        metrics.values["failure_reason"] = failure
    return log, metrics


def compute_metrics(spec: TaskSpec, log: TrajectoryLog,
                    diag: Diagnostics) -> MetricsReport:
    m: dict = {"failed": 0, "failure_reason": "", "steps": len(log)}
    if len(log) == 0:
        return MetricsReport(m)
    dt = spec.plant.dt
    m["duration"] = f"{log.t[-1] + dt:.17g}"
    m["avg_speed"] = f"{log.v_actual.mean():.17g}"
    m["max_speed"] = f"{log.v_actual.max():.17g}"
    m["distance"] = f"{(log.v_actual * dt).sum():.17g}"
    m["max_rr"] = f"{log.rr.max():.17g}"
    m["frac_rr_above_max"] = f"{(log.rr > spec.constraints.rr_max).mean():.17g}"
    m["frac_rr_above_tol"] = f"{(log.rr > 1.05 * spec.constraints.rr_max).mean():.17g}"
    m["hard_bound_violations"] = int((log.rr > spec.vehicle.hard_rr_bound).sum())
    m["tau_min_seen"] = f"{diag.tau.min():.17g}"
    m["tau_max_seen"] = f"{diag.tau.max():.17g}"
    m["tau_band_violations"] = int(((diag.tau < spec.constraints.tau_min_res)
                                    | (diag.tau > spec.constraints.tau_max_res)).sum())

    if spec.kind in ("flat_circle", "hill_circle"):
        ang = np.unwrap(np.arctan2(log.y - spec.center_y, log.x - spec.center_x))
        m["laps"] = f"{abs(ang[-1] - ang[0]) / (2 * math.pi):.17g}"
        m["avg_lap_speed"] = f"{(log.v_actual * dt).sum() / (log.t[-1] + dt):.17g}"
        # camber sectors: on-camber headings turn toward the downhill side
        az = math.radians(spec.terrain.azimuth_deg)
        sector = spec.direction * np.sin(log.psi - az)
        on = log.v_actual[sector > 0.0]
        off = log.v_actual[sector < 0.0]
        if len(on) and len(off):
            m["max_speed_on_camber"] = f"{on.max():.17g}"
            m["max_speed_off_camber"] = f"{off.max():.17g}"
        # steady-state speed over the last half of the run
        half = len(log) // 2
        m["steady_speed"] = f"{log.v_actual[half:].mean():.17g}"
    if spec.kind == "ditch_cross":
        hw = spec.terrain.half_width
        m["crossed"] = int(log.x[-1] > hw + 2.0)
        approach = (log.x > -(hw + spec.start_offset)) & (log.x < -hw)
        if approach.any():
            m["min_cmd_speed_approach"] = f"{log.v_cmd[approach].min():.17g}"
            m["min_speed_approach"] = f"{log.v_actual[approach].min():.17g}"
        inside = np.abs(log.x) <= hw + 2.0
        if inside.any():
            m["avg_speed_crossing"] = f"{log.v_actual[inside].mean():.17g}"
    return MetricsReport(m)
