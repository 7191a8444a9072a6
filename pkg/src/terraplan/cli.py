"""Command-line entry points.

Subcommands: gen-terrain, simulate, plan, eval, bench. Exit codes: 0 ok,
2 invalid arguments/config, 3 I/O failure, 4 episode failure (logs are
still written). TERRA_THREADS caps the evaluation worker count.
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys
import time

import numpy as np

from . import batch as _batch
from .config import ConfigError, dump_task, load_task
from .kinematics import DelayConfig
from .mppi import MppiConfig, Planner
from .sim import (MetricsReport, TrajectoryLog, ground_truth_diagnostics,
                  run_task, task_preset)
from .terrain import (InvalidSpec, TerrainError, TerrainSpec,
                      generate_terrain, write_ascii_grid)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_EPISODE = 4


def _gen_terrain(args) -> int:
    try:
        spec = TerrainSpec(kind=args.kind.replace("-", "_"), extent=args.size,
                           cell_size=args.res, angle_deg=args.angle_deg,
                           azimuth_deg=args.azimuth_deg, depth=args.depth,
                           half_width=args.half_width,
                           wall_angle_deg=args.wall_angle_deg,
                           axis_azimuth_deg=args.axis_azimuth_deg,
                           smooth=args.smooth, radius=args.radius,
                           rim_width=args.rim_width, amplitude=args.amplitude,
                           wavelength=args.wavelength)
        emap = generate_terrain(spec)
    except (InvalidSpec, ValueError) as e:
        print(f"invalid terrain spec: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        write_ascii_grid(emap, args.out)
    except OSError as e:
        print(f"cannot write {args.out}: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.out}: {emap.n_cols}x{emap.n_rows} cells, "
          f"height range [{np.nanmin(emap.heights):.3f}, {np.nanmax(emap.heights):.3f}] m")
    return EXIT_OK


def _load_spec(args):
    return load_task(path=args.config, overrides=list(args.set or ()),
                     task=args.task, seed=args.seed)


def _simulate(args) -> int:
    try:
        spec = _load_spec(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(args.out, exist_ok=True)
    try:
        log, metrics = run_task(spec)
    except (ValueError, TerrainError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    log.write_csv(os.path.join(args.out, "log.csv"))
    metrics.write(os.path.join(args.out, "metrics.txt"))
    with open(os.path.join(args.out, "config.txt"), "w") as f:
        f.write(dump_task(spec))
    failed = str(metrics.values.get("failed", 0)) == "1"
    status = "FAILED" if failed else "ok"
    print(f"{spec.kind}: avg speed {float(metrics.values['avg_speed']):.2f} m/s, "
          f"max RR {float(metrics.values['max_rr']):.2f}, "
          f"tau band violations {metrics.values['tau_band_violations']}, "
          f"status {status}")
    return EXIT_EPISODE if failed else EXIT_OK


def _plan(args) -> int:
    try:
        spec = _load_spec(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emap = generate_terrain(spec.terrain)
        task, start, u0 = spec.build()
        planner = Planner(emap, spec.plant.footprint, spec.limits, spec.vehicle,
                          spec.constraints, spec.mppi, task=task)
    except (ValueError, TerrainError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    planner.seed_nominal(u0.v, u0.kappa)
    cmd, diag = planner.plan_step(start, DelayConfig())
    print(f"command: v={cmd.v:.4f} m/s  kappa={cmd.kappa:.6f} 1/m")
    print(f"cost: min={diag.min_cost:.3f} mean={diag.mean_cost:.3f}")
    for fam, c in diag.family_best.items():
        print(f"  best {fam}: {c:.3f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "winner_profile.csv")
        with open(path, "w") as f:
            f.write("step,rr,tau_ditch\n")
            for k, (r, t) in enumerate(zip(diag.win_rr, diag.win_tau)):
                f.write(f"{k},{r:.17g},{t:.17g}\n")
        print(f"wrote {path}")
    return EXIT_OK


def _eval(args) -> int:
    try:
        spec = _load_spec(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        log = TrajectoryLog.read_csv(args.log)
    except OSError as e:
        print(f"cannot read {args.log}: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"malformed log: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emap = generate_terrain(spec.terrain)
    except TerrainError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    dt = spec.plant.dt
    stride = int(round(spec.mppi.dt / dt))
    diag = ground_truth_diagnostics(log.x, log.y, log.psi, log.v_actual, emap,
                                    spec.plant.footprint, spec.vehicle, dt,
                                    stride=stride, roll=log.roll, pitch=log.pitch)
    os.makedirs(args.out, exist_ok=True)

    # per-heading-bin aggregates (15 degree bins)
    bins = ((np.degrees(log.psi) % 360.0) // 15.0).astype(int)
    with open(os.path.join(args.out, "heading_bins.csv"), "w") as f:
        f.write("bin_start_deg,count,mean_speed,max_speed,mean_rr,max_rr\n")
        for b in range(24):
            m = bins == b
            if m.any():
                f.write(f"{b*15},{int(m.sum())},{log.v_actual[m].mean():.17g},"
                        f"{log.v_actual[m].max():.17g},{diag.rr[m].mean():.17g},"
                        f"{diag.rr[m].max():.17g}\n")
            else:
                f.write(f"{b*15},0,nan,nan,nan,nan\n")

    s = np.concatenate([[0.0], np.cumsum(log.v_actual * dt)])[:-1]
    with open(os.path.join(args.out, "tau_profile.csv"), "w") as f:
        f.write("arclength,tau_ditch\n")
        for idx, t in zip(diag.tau_index, diag.tau):
            f.write(f"{s[idx]:.17g},{t:.17g}\n")

    metrics = MetricsReport({
        "max_rr": f"{diag.rr.max():.17g}",
        "mean_rr": f"{diag.rr.mean():.17g}",
        "frac_rr_above_max": f"{(diag.rr > spec.constraints.rr_max).mean():.17g}",
        "tau_min_seen": f"{diag.tau.min():.17g}",
        "tau_max_seen": f"{diag.tau.max():.17g}",
        "tau_band_violations": int(((diag.tau < spec.constraints.tau_min_res)
                                    | (diag.tau > spec.constraints.tau_max_res)).sum()),
        "avg_speed": f"{log.v_actual.mean():.17g}",
        "steps": len(log),
    })
    metrics.write(os.path.join(args.out, "metrics.txt"))
    print(f"evaluated {len(log)} steps: max RR {diag.rr.max():.3f}, "
          f"tau range [{diag.tau.min():.2f}, {diag.tau.max():.2f}]")
    return EXIT_OK


def _family_allocation(n: int) -> tuple[int, int, int, int]:
    """Split a total sample budget across the four families."""
    if n < 8:
        return n, 0, 0, 0
    n_reset = max(3, n // 32)
    n_narrow = n // 5
    n_scaled = n // 6
    return n - n_narrow - n_scaled - n_reset, n_narrow, n_scaled, n_reset


def _bench(args) -> int:
    spec = task_preset("flat_circle", seed=args.seed)
    n_conv, n_narrow, n_scaled, n_reset = _family_allocation(args.n)
    cfg = MppiConfig(horizon=args.horizon, rng_seed=args.seed,
                     n_conv=n_conv, n_narrow=n_narrow,
                     n_scaled=n_scaled, n_reset=n_reset)
    emap = generate_terrain(spec.terrain)
    task, start, u0 = spec.build()
    rows = []
    for workers in args.workers:
        eff = _batch.resolve_workers(workers)
        planner = Planner(emap, spec.plant.footprint, spec.limits, spec.vehicle,
                          spec.constraints, cfg, task=task)
        planner.workers = eff
        planner.seed_nominal(u0.v, u0.kappa)
        planner.plan_step(start, DelayConfig())   # warm up JIT and caches
        times = []
        for _ in range(args.iters):
            t0 = time.perf_counter()
            planner.plan_step(start, DelayConfig())
            times.append(time.perf_counter() - t0)
        med = statistics.median(times) * 1e3
        p95 = sorted(times)[int(0.95 * (len(times) - 1))] * 1e3
        thr = cfg.n_total * cfg.horizon / (statistics.median(times))
        rows.append((workers, eff, med, p95, thr))
        print(f"workers requested {workers} (effective {eff}): "
              f"median {med:.2f} ms, p95 {p95:.2f} ms, "
              f"{thr/1e6:.2f}M sample-steps/s over {args.iters} iters "
              f"(N={cfg.n_total}, H={cfg.horizon})")
    if len(rows) > 1:
        print(f"speedup {rows[0][2] / rows[-1][2]:.2f}x from {rows[0][0]} to "
              f"{rows[-1][0]} workers")
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="terraplan",
                                 description="Sampling-based off-road MPC planner and simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-terrain", help="write a synthetic heightmap")
    g.add_argument("--kind", required=True,
                   choices=["flat", "incline", "v-ditch", "v_ditch", "crater", "sine-bumps", "sine_bumps"])
    g.add_argument("--size", type=float, default=200.0, help="side length, m")
    g.add_argument("--res", type=float, default=0.5, help="cell size, m")
    g.add_argument("--angle-deg", type=float, default=10.0)
    g.add_argument("--azimuth-deg", type=float, default=0.0)
    g.add_argument("--depth", type=float, default=1.0)
    g.add_argument("--half-width", type=float, default=4.0)
    g.add_argument("--wall-angle-deg", type=float, default=20.0)
    g.add_argument("--axis-azimuth-deg", type=float, default=90.0)
    g.add_argument("--smooth", type=float, default=0.0)
    g.add_argument("--radius", type=float, default=10.0)
    g.add_argument("--rim-width", type=float, default=3.0)
    g.add_argument("--amplitude", type=float, default=0.3)
    g.add_argument("--wavelength", type=float, default=8.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_gen_terrain)

    def common(p, need_out=False):
        p.add_argument("--task", default=None,
                       help="task preset: flat-circle, hill-circle, ditch-cross, slalom")
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
        if need_out:
            p.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("simulate", help="run a closed-loop task")
    common(s, need_out=True)
    s.set_defaults(func=_simulate)

    p = sub.add_parser("plan", help="single planning step diagnostics")
    common(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_plan)

    e = sub.add_parser("eval", help="recompute diagnostics from a trajectory log")
    common(e, need_out=True)
    e.add_argument("--log", required=True)
    e.set_defaults(func=_eval)

    b = sub.add_parser("bench", help="planner throughput benchmark")
    b.add_argument("--n", type=int, default=1024)
    b.add_argument("--horizon", type=int, default=50)
    b.add_argument("--iters", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workers", type=lambda s: [int(v) for v in s.split(",")],
                   default=[1, 8])
    b.set_defaults(func=_bench)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
