import math

import numpy as np
import pytest

from terraplan.kinematics import (Control, DelayConfig, FeasibilityLimits,
                                  PlanarState, process_feasible, project_state,
                                  rollout, step, wrap_angle)

LIM = FeasibilityLimits(dv_max=0.2, dkappa_max=0.03, v_min=0.1, kappa_max=0.25,
                        v_cap=12.0, v_floor=-12.0)


class TestStep:
    def test_straight(self):
        s = step(PlanarState(0, 0, 0), Control(1.0, 0.0), 1.0)
        assert (s.x, s.y, s.psi) == (1.0, 0.0, 0.0)

    def test_heading_rate(self):
        s = step(PlanarState(0, 0, 0), Control(1.0, math.pi / 2), 1.0)
        assert s.psi == pytest.approx(math.pi / 2)

    def test_zero_velocity_fixes_state(self):
        s0 = PlanarState(3.0, -1.0, 0.7)
        for kappa in (-0.2, 0.0, 0.25):
            s = step(s0, Control(0.0, kappa), 0.5)
            assert (s.x, s.y, s.psi) == (s0.x, s0.y, s0.psi)


class TestRollout:
    def test_positions_accumulate(self):
        states = rollout(PlanarState(0, 0, 0), [Control(1.0, 0.0)] * 3, 1.0)
        assert [s.x for s in states] == [0.0, 1.0, 2.0, 3.0]

    def test_constant_turn_matches_exact_arc(self):
        v, kappa, dt, h = 2.0, 0.2, 0.005, 500
        states = rollout(PlanarState(0, 0, 0), [Control(v, kappa)] * h, dt)
        t = h * dt
        ang = v * kappa * t
        r = 1.0 / kappa
        exact = (r * math.sin(ang), r * (1.0 - math.cos(ang)))
        # forward Euler: O(dt^2) error per step
        tol = 0.5 * v * v * kappa * dt * dt * h * 2
        assert states[-1].x == pytest.approx(exact[0], abs=tol)
        assert states[-1].y == pytest.approx(exact[1], abs=tol)

    def test_all_zero_velocity(self):
        states = rollout(PlanarState(1, 2, 3), [Control(0.0, 0.1)] * 5, 0.1)
        assert all((s.x, s.y, s.psi) == (1, 2, 3) for s in states)

    def test_semigroup(self):
        rng = np.random.default_rng(3)
        seq = [Control(rng.uniform(0, 5), rng.uniform(-0.2, 0.2)) for _ in range(20)]
        full = rollout(PlanarState(0, 0, 0), seq, 0.1)
        first = rollout(PlanarState(0, 0, 0), seq[:8], 0.1)
        second = rollout(first[-1], seq[8:], 0.1)
        assert second[-1] == full[-1]


class TestProcessFeasible:
    def test_velocity_clip(self):
        lim = FeasibilityLimits(dv_max=0.5, dkappa_max=0.03, v_min=0.1,
                                kappa_max=0.25, v_cap=12.0)
        out = process_feasible([(6.0, 0.0)], Control(5.0, 0.0), lim)
        assert out[0].v == pytest.approx(5.5)

    def test_curvature_frozen_below_vmin(self):
        out = process_feasible([(0.05, 0.3)], Control(0.05, 0.1), LIM)
        assert out[0].kappa == 0.1

    def test_identity_when_feasible(self):
        raw = [(1.0, 0.01), (1.1, 0.02), (1.05, 0.0)]
        out = process_feasible(raw, Control(1.0, 0.0), LIM)
        for (rv, rk), u in zip(raw, out):
            assert u.v == rv and u.kappa == rk

    def test_invariants_random(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            raw = list(zip(rng.uniform(-20, 20, 40), rng.uniform(-1, 1, 40)))
            prev = Control(rng.uniform(-5, 5), rng.uniform(-0.2, 0.2))
            out = process_feasible(raw, prev, LIM)
            vp, kp = prev.v, prev.kappa
            for u in out:
                assert abs(u.v - vp) <= LIM.dv_max + 1e-12
                if abs(u.v) < LIM.v_min:
                    assert u.kappa == kp
                else:
                    assert abs(u.kappa - kp) <= LIM.dkappa_max + 1e-12
                    assert abs(u.kappa) <= LIM.kappa_max + 1e-12
                assert LIM.v_floor - 1e-12 <= u.v <= LIM.v_cap + 1e-12
                vp, kp = u.v, u.kappa

    def test_idempotent(self):
        rng = np.random.default_rng(12)
        raw = list(zip(rng.uniform(-20, 20, 50), rng.uniform(-1, 1, 50)))
        prev = Control(2.0, 0.05)
        once = process_feasible(raw, prev, LIM)
        twice = process_feasible([(u.v, u.kappa) for u in once], prev, LIM)
        assert once == twice

    def test_default_floor_forbids_reverse(self):
        lim = FeasibilityLimits()
        out = process_feasible([(-3.0, 0.0)] * 30, Control(1.0, 0.0), lim)
        assert all(u.v >= 0.0 for u in out)


class TestProjectState:
    def test_zero_delay_identity(self):
        s = PlanarState(1, 2, 0.5)
        assert project_state(s, DelayConfig(tau=0), 0.1) == s

    def test_two_straight_steps(self):
        d = DelayConfig(tau=2, pending=[Control(1.0, 0.0), Control(1.0, 0.0)])
        s = project_state(PlanarState(0, 0, 0), d, 0.1)
        assert s.x == pytest.approx(0.2)
        assert s.y == 0.0

    def test_zero_velocity_pending(self):
        d = DelayConfig(tau=1, pending=[Control(0.0, 0.2)])
        s = PlanarState(4, 5, 1.0)
        assert project_state(s, d, 0.1) == s

    def test_matches_plant_with_identical_model(self):
        # delay compensation is exact when the plant executes the same
        # commands through the identical step function
        rng = np.random.default_rng(5)
        controls = [Control(rng.uniform(0, 8), rng.uniform(-0.2, 0.2))
                    for _ in range(40)]
        dt = 0.1
        tau = 2
        idle = Control(0.0, 0.0)
        # plant trajectory under delayed execution: x_{k+1} = f(x_k, u_{k-tau})
        traj = [PlanarState(0, 0, 0)]
        for k in range(len(controls)):
            executed = controls[k - tau] if k >= tau else idle
            traj.append(step(traj[-1], executed, dt))
        for t in range(tau, len(controls) - tau):
            pending = [controls[j] if j >= 0 else idle
                       for j in range(t - tau, t)]
            projected = project_state(traj[t], DelayConfig(tau=tau, pending=pending), dt)
            assert projected == traj[t + tau]


def test_wrap_angle():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi + 0.1) == pytest.approx(-math.pi + 0.1)
    assert wrap_angle(0.3) == pytest.approx(0.3)
