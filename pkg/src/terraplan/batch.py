"""Batched sampling and rollout-cost kernels.

The per-sample pipeline (feasibility processing, kinematic rollout, map
attitude, pitch differencing, constraint and task costs) is compiled with
numba and parallelized across samples. Samples never share mutable state, so
results are identical for any worker count; reductions happen afterwards in
fixed order in numpy.

Task cost codes: 0 none; 1 circle (cx, cy, radius, v_ref, w_speed, w_track);
2 line (px, py, dir_x, dir_y, v_ref, w_speed, w_track); 3 polyline
(v_ref, w_speed, w_track, n, x1, y1, ...).
"""

from __future__ import annotations

import math
import os

import numba
import numpy as np
from numba import njit, prange

from .rng import normal_pair, stream_key

OOB_PENALTY = 1.0e6

TASK_NONE = 0
TASK_CIRCLE = 1
TASK_LINE = 2
TASK_POLYLINE = 3


def max_workers() -> int:
    return numba.config.NUMBA_NUM_THREADS


def resolve_workers(requested: int | None) -> int:
    """Clamp a worker request to [1, available]; honors TERRA_THREADS."""
    cap = max_workers()
    env = os.environ.get("TERRA_THREADS")
    if env:
        cap = min(cap, max(1, int(env)))
    if requested is None:
        return cap
    return max(1, min(requested, cap))


@njit(cache=True, parallel=True)
def sample_kernel(nominal, n_conv, n_narrow, n_scaled, n_reset,
                  sigma_v, sigma_kappa, narrow_scale, speed_scale,
                  kappa_reset, seed, iteration, raw):
    n, h = raw.shape[0], raw.shape[1]
    for i in prange(n):
        key = stream_key(seed, iteration, i)
        if i < n_conv:
            family = 0
        elif i < n_conv + n_narrow:
            family = 1
        elif i < n_conv + n_narrow + n_scaled:
            family = 2
        else:
            family = 3
        sv = sigma_v
        sk = sigma_kappa
        if family == 1:
            sv *= narrow_scale
            sk *= narrow_scale
        reset_kappa = 0.0
        if family == 3:
            slot = (i - n_conv - n_narrow - n_scaled) % 3
            if slot == 1:
                reset_kappa = -kappa_reset
            elif slot == 2:
                reset_kappa = kappa_reset
        for k in range(h):
            zv, zk = normal_pair(key, k)
            if family == 3:
                mv = 0.0
                mk = reset_kappa
            elif family == 2:
                mv = speed_scale * nominal[k, 0]
                mk = nominal[k, 1]
            else:
                mv = nominal[k, 0]
                mk = nominal[k, 1]
            raw[i, k, 0] = mv + sv * zv
            raw[i, k, 1] = mk + sk * zk


@njit(cache=True, inline="always")
def _bilinear(heights, ox, oy, cell, ncols, nrows, x, y):
    """Returns (height, valid)."""
    fc = (x - ox) / cell
    fr = (y - oy) / cell
    if fc < 0.0 or fr < 0.0 or fc > ncols - 1 or fr > nrows - 1:
        return 0.0, False
    c0 = int(fc)
    r0 = int(fr)
    if c0 > ncols - 2:
        c0 = ncols - 2
    if r0 > nrows - 2:
        r0 = nrows - 2
    dc = fc - c0
    dr = fr - r0
    z00 = heights[r0, c0]
    z01 = heights[r0, c0 + 1]
    z10 = heights[r0 + 1, c0]
    z11 = heights[r0 + 1, c0 + 1]
    if math.isnan(z00) or math.isnan(z01) or math.isnan(z10) or math.isnan(z11):
        return 0.0, False
    return (z00 * (1 - dc) + z01 * dc) * (1 - dr) + (z10 * (1 - dc) + z11 * dc) * dr, True


@njit(cache=True, inline="always")
def _task_cost(code, tp, x, y, psi, v):
    if code == TASK_CIRCLE:
        rx = x - tp[0]
        ry = y - tp[1]
        d = math.hypot(rx, ry) - tp[2]
        dv = v - tp[3]
        # desired heading: circle tangent in the travel direction
        tan_psi = math.atan2(ry, rx) + tp[7] * 0.5 * math.pi
        return (tp[4] * dv * dv + tp[5] * d * d
                + tp[6] * (1.0 - math.cos(psi - tan_psi)))
    if code == TASK_LINE:
        lat = -(x - tp[0]) * tp[3] + (y - tp[1]) * tp[2]
        dv = v - tp[4]
        mis = 1.0 - (math.cos(psi) * tp[2] + math.sin(psi) * tp[3])
        return tp[5] * dv * dv + tp[6] * lat * lat + tp[7] * mis
    if code == TASK_POLYLINE:
        n = int(tp[4])
        best = 1.0e30
        seg_psi = 0.0
        for j in range(n - 1):
            ax, ay = tp[5 + 2 * j], tp[6 + 2 * j]
            bx, by = tp[7 + 2 * j], tp[8 + 2 * j]
            ex, ey = bx - ax, by - ay
            ee = ex * ex + ey * ey
            t = 0.0
            if ee > 0.0:
                t = ((x - ax) * ex + (y - ay) * ey) / ee
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            dx, dy = x - (ax + t * ex), y - (ay + t * ey)
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
                seg_psi = math.atan2(ey, ex)
        dv = v - tp[0]
        return (tp[1] * dv * dv + tp[2] * best
                + tp[3] * (1.0 - math.cos(psi - seg_psi)))
    return 0.0


@njit(cache=True, parallel=True)
def evaluate_kernel(raw, prev_v, prev_kappa,
                    dv_max, dkappa_max, v_min, kappa_max, v_cap, v_floor,
                    x0, y0, psi0, dt,
                    heights, ox, oy, cell, ncols, nrows,
                    half_len, half_wid, wheelbase, track,
                    p1, p2, p3, i22, grav,
                    rr_max, tau_min, tau_max, w1, w2, w3,
                    baseline_mode, roll_limit,
                    task_code, task_params,
                    processed, states, phi, theta, rr, tau, costs, comps):
    n, hh = raw.shape[0], raw.shape[1]
    for i in prange(n):
        # feasibility processing
        vp = prev_v
        kp = prev_kappa
        for k in range(hh):
            v = raw[i, k, 0]
            if v > vp + dv_max:
                v = vp + dv_max
            elif v < vp - dv_max:
                v = vp - dv_max
            if v > v_cap:
                v = v_cap
            elif v < v_floor:
                v = v_floor
            if abs(v) < v_min:
                kap = kp
            else:
                kap = raw[i, k, 1]
                if kap > kp + dkappa_max:
                    kap = kp + dkappa_max
                elif kap < kp - dkappa_max:
                    kap = kp - dkappa_max
                if kap > kappa_max:
                    kap = kappa_max
                elif kap < -kappa_max:
                    kap = -kappa_max
            processed[i, k, 0] = v
            processed[i, k, 1] = kap
            vp = v
            kp = kap

        # rollout and attitude along it
        sth = np.empty(hh + 1)
        cth = np.empty(hh + 1)
        sph = np.empty(hh + 1)
        cph = np.empty(hh + 1)
        x = x0
        y = y0
        psi = psi0
        oob = 0
        for k in range(hh + 1):
            states[i, k, 0] = x
            states[i, k, 1] = y
            states[i, k, 2] = psi
            c = math.cos(psi)
            s = math.sin(psi)
            zfl, ok0 = _bilinear(heights, ox, oy, cell, ncols, nrows,
                                 x + half_len * c - half_wid * s,
                                 y + half_len * s + half_wid * c)
            zfr, ok1 = _bilinear(heights, ox, oy, cell, ncols, nrows,
                                 x + half_len * c + half_wid * s,
                                 y + half_len * s - half_wid * c)
            zrl, ok2 = _bilinear(heights, ox, oy, cell, ncols, nrows,
                                 x - half_len * c - half_wid * s,
                                 y - half_len * s + half_wid * c)
            zrr, ok3 = _bilinear(heights, ox, oy, cell, ncols, nrows,
                                 x - half_len * c + half_wid * s,
                                 y - half_len * s - half_wid * c)
            if ok0 and ok1 and ok2 and ok3:
                p = ((zfl + zfr) - (zrl + zrr)) / (2.0 * wheelbase)
                q = ((zfl + zrl) - (zfr + zrr)) / (2.0 * track)
                th = -math.atan(p)
                ct = 1.0 / math.sqrt(1.0 + p * p)
                st = -p * ct
                tphi = q * ct
                ph = -math.atan(tphi)
                cp = 1.0 / math.sqrt(1.0 + tphi * tphi)
                sp = -tphi * cp
                theta[i, k] = th
                phi[i, k] = ph
                sth[k] = st
                cth[k] = ct
                sph[k] = sp
                cph[k] = cp
            else:
                oob += 1
                if k > 0:
                    theta[i, k] = theta[i, k - 1]
                    phi[i, k] = phi[i, k - 1]
                    sth[k] = sth[k - 1]
                    cth[k] = cth[k - 1]
                    sph[k] = sph[k - 1]
                    cph[k] = cph[k - 1]
                else:
                    theta[i, k] = 0.0
                    phi[i, k] = 0.0
                    sth[k] = 0.0
                    cth[k] = 1.0
                    sph[k] = 0.0
                    cph[k] = 1.0
            if k < hh:
                v = processed[i, k, 0]
                x += v * c * dt
                y += v * s * dt
                psi += v * processed[i, k, 1] * dt

        # constraint and task costs over the horizon
        c_roll = 0.0
        c_air = 0.0
        c_bump = 0.0
        c_task = 0.0
        last_a2 = 0.0
        for k in range(hh):
            v = processed[i, k, 0]
            kap = processed[i, k, 1]
            if baseline_mode:
                ex = abs(phi[i, k]) - roll_limit
                if ex > 0.0:
                    c_roll += ex
                rr[i, k] = abs(v * v * kap - grav * sph[k]) / cph[k]
            else:
                r = abs(v * v * kap - grav * sph[k]) / cph[k]
                rr[i, k] = r
                if r > rr_max:
                    c_roll += r
            w2k = (theta[i, k + 1] - theta[i, k]) / dt
            if k + 2 <= hh:
                w2k1 = (theta[i, k + 2] - theta[i, k + 1]) / dt
                a2k = (w2k1 - w2k) / dt
                last_a2 = a2k
            else:
                a2k = last_a2
            t = (i22 * a2k + p1 * v * w2k
                 - p3 * grav * sth[k] - p1 * grav * cth[k])
            tau[i, k] = t
            d = t - tau_max
            if d > 0.0:
                c_air += d
            d = tau_min - t
            if d > 0.0:
                c_bump += d
            c_task += _task_cost(task_code, task_params,
                                 states[i, k + 1, 0], states[i, k + 1, 1],
                                 states[i, k + 1, 2], v)
        comps[i, 0] = c_roll
        comps[i, 1] = c_air
        comps[i, 2] = c_bump
        comps[i, 3] = c_task
        comps[i, 4] = oob * OOB_PENALTY
        costs[i] = (w1 * c_roll + w2 * c_air + w3 * c_bump
                    + c_task + oob * OOB_PENALTY)
