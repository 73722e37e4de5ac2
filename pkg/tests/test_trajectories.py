"""Trajectory integration: adaptive stepping, schedules, batch evolution."""

import math

import numpy as np
import pytest

from subquantum.errors import ConfigurationError
from subquantum.states import (BoxGeometry, EntangledState, ExpandingBoxState,
                               ModeSuperposition, eval_state, velocity)
from subquantum.trajectories import (IntegratorConfig, backtrack, backtrack_many,
                                     born_many, build_schedule, density_ceiling,
                                     integrate, run_schedule, thread_count)

L = math.pi
INV_SQRT2 = 1.0 / math.sqrt(2.0)


def two_mode_1d():
    amps = np.array([INV_SQRT2, INV_SQRT2 * np.exp(0.3j)])
    return ModeSuperposition([(1,), (2,)], amps, BoxGeometry(1))


def four_mode_2d():
    amps = np.full(4, 0.5) * np.exp(1j * np.array([0.1, 0.9, 1.7, 2.2]))
    return ModeSuperposition([(1, 1), (1, 2), (2, 1), (2, 2)], amps, BoxGeometry(2))


def entangled(event=0.5):
    return EntangledState([((1, 2), INV_SQRT2), ((2, 1), INV_SQRT2)],
                          event_time=event, truncation=32, truncation_tol=5e-4)


class TestIntegratorConfig:
    def test_defaults(self):
        cfg = IntegratorConfig()
        assert cfg.rel_tol == 1e-8
        assert cfg.abs_tol == 1e-10
        assert cfg.h_init == 1e-3
        assert cfg.h_min == 1e-12
        assert cfg.h_max == 1e-1
        assert cfg.node_density_floor == 1e-12
        assert cfg.max_steps == 10_000_000

    def test_rejects_nonpositive_tolerances(self):
        with pytest.raises(ConfigurationError):
            IntegratorConfig(rel_tol=0.0)
        with pytest.raises(ConfigurationError):
            IntegratorConfig(abs_tol=-1e-10)

    def test_rejects_inconsistent_steps(self):
        with pytest.raises(ConfigurationError):
            IntegratorConfig(h_min=1e-1, h_max=1e-3)
        with pytest.raises(ConfigurationError):
            IntegratorConfig(max_steps=0)


class TestSingleModeFrozen:
    def test_trajectory_is_exactly_stationary(self):
        state = ModeSuperposition([(2, 1)], [1.0], BoxGeometry(2))
        x0 = np.array([1.1, 0.7])
        path = integrate(state, x0, 0.0, 7.0)
        assert path.status == "completed"
        assert np.all(path.positions == x0)
        assert np.all(path.velocities == 0.0)

    def test_entangled_degenerate_pre_event_stationary(self):
        # the (1,2)/(2,1) pair shares one energy, so the pre-event phase
        # is spatially constant and the velocity vanishes exactly
        state = entangled(event=math.inf)
        x0 = np.array([1.3, 2.1])
        path = integrate(state, x0, 0.0, 3.0)
        assert np.all(path.positions == x0)
        assert np.all(path.velocities == 0.0)


class TestIntegrate:
    def test_endpoints_recorded(self):
        state = two_mode_1d()
        path = integrate(state, np.array([1.2]), 0.0, 2.0)
        assert path.times[0] == 0.0
        assert path.times[-1] == 2.0
        assert path.status == "completed"
        assert path.step_count == path.accepted
        pts = path.points
        assert pts[0][0] == 0.0 and np.all(pts[0][1] == path.positions[0])

    def test_recorded_velocities_match_guidance_law(self):
        state = four_mode_2d()
        path = integrate(state, np.array([1.0, 1.4]), 0.0, 1.0)
        for k in range(0, len(path.times), 7):
            t, x = path.times[k], path.positions[k]
            v_ref = velocity(eval_state(state, x, t))
            assert np.abs(path.velocities[k] - v_ref).max() < 1e-10

    def test_round_trip_accuracy(self):
        state = two_mode_1d()
        cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
        x0 = np.array([0.8])
        fwd = integrate(state, x0, 0.0, 2.0, cfg)
        back = integrate(state, fwd.final_position, 2.0, 0.0, cfg)
        assert abs(back.final_position[0] - x0[0]) < 1e-8

    def test_tighter_tolerance_reduces_round_trip_error(self):
        state = two_mode_1d()
        x0 = np.array([1.9])
        errors = []
        for rel in (1e-5, 1e-8):
            cfg = IntegratorConfig(rel_tol=rel, abs_tol=rel * 1e-2)
            fwd = integrate(state, x0, 0.0, 2.0, cfg)
            back = integrate(state, fwd.final_position, 2.0, 0.0, cfg)
            errors.append(abs(back.final_position[0] - x0[0]))
        assert errors[1] < errors[0] * 0.1

    def test_interpolation_inside_steps(self):
        state = two_mode_1d()
        path = integrate(state, np.array([1.5]), 0.0, 1.0)
        t_mid = 0.437
        x_mid = path.at(t_mid)
        direct = integrate(state, np.array([1.5]), 0.0, t_mid)
        # Hermite interpolation between accepted steps is not tolerance
        # controlled, so the bound is looser than the integration error.
        assert abs(x_mid[0] - direct.final_position[0]) < 1e-5

    def test_step_limit_status(self):
        state = two_mode_1d()
        cfg = IntegratorConfig(max_steps=5)
        path = integrate(state, np.array([1.2]), 0.0, 3.0, cfg)
        assert path.status == "step_limit"
        assert path.attempted <= 5

    def test_node_start_aborts(self):
        amps = np.array([INV_SQRT2, -INV_SQRT2])
        state = ModeSuperposition([(1,), (2,)], amps, BoxGeometry(1))
        path = integrate(state, np.array([math.pi / 3.0]), 0.0, 1.0)
        assert path.status == "node_abort"

    def test_zero_span_records_single_point(self):
        state = two_mode_1d()
        path = integrate(state, np.array([1.0]), 0.7, 0.7)
        assert path.status == "completed"
        assert path.times.shape == (1,)
        assert path.times[0] == 0.7

    def test_velocity_scale_reparametrizes_time(self):
        amps = np.array([INV_SQRT2, INV_SQRT2 * np.exp(0.3j)])
        slow = ModeSuperposition([(1,), (2,)], amps, BoxGeometry(1),
                                 velocity_scale=0.25)
        fast = ModeSuperposition([(1,), (2,)], amps, BoxGeometry(1))
        cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
        x0 = np.array([1.1])
        a = integrate(slow, x0, 0.0, 4.0, cfg)
        b = integrate(fast, x0, 0.0, 1.0, cfg)
        assert abs(a.final_position[0] - b.final_position[0]) < 1e-8

    def test_crosses_wall_event_continuously(self):
        state = entangled(event=0.5)
        path = integrate(state, np.array([1.0, 2.0]), 0.0, 1.0)
        assert path.status == "completed"
        assert np.all(np.diff(path.times) > 0.0)
        k = np.searchsorted(path.times, 0.5)
        # positions continuous across the event; jumps only in velocity
        assert np.abs(path.positions[k] - path.positions[k - 1]).max() < 0.05

    def test_rejects_outside_start(self):
        state = two_mode_1d()
        with pytest.raises(ConfigurationError):
            integrate(state, np.array([-0.5]), 0.0, 1.0)


class TestSchedule:
    def test_capture_times_must_advance_away(self):
        state = two_mode_1d()
        with pytest.raises(ConfigurationError):
            build_schedule(state, 0.0, [0.5, 0.3])
        with pytest.raises(ConfigurationError):
            build_schedule(state, 1.0, [0.5, 1.5])

    def test_event_splits_segments(self):
        state = entangled(event=0.5)
        t0s, t1s, posts, cap_idx = build_schedule(state, 0.0, [0.3, 0.7])
        assert t0s[0] == 0.0 and t1s[-1] == 0.7
        assert np.all(t0s[1:] == t1s[:-1])
        seam = np.where(t1s == 0.5)[0]
        assert seam.size == 1
        assert posts[seam[0]] == 0 and posts[seam[0] + 1] == 1

    def test_backward_schedule(self):
        state = two_mode_1d()
        t0s, t1s, posts, cap_idx = build_schedule(state, 2.0, [1.0, 0.0])
        assert np.all(t1s < t0s)


class TestBatch:
    def test_matches_single_trajectory(self):
        state = four_mode_2d()
        pts = np.array([[1.0, 1.0], [2.0, 0.5], [0.4, 2.8]])
        cfg = IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10)
        captured, status, steps = run_schedule(state, pts, 0.0, [0.6], cfg)
        assert captured.shape == (1, 3, 2)
        assert np.all(status == 0)
        for i, p in enumerate(pts):
            path = integrate(state, p, 0.0, 0.6, cfg)
            assert np.abs(captured[0, i] - path.final_position).max() < 1e-12

    def test_thread_count_does_not_change_bits(self):
        state = four_mode_2d()
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.uniform(0.3, L - 0.3, 40),
                               rng.uniform(0.3, L - 0.3, 40)])
        a, sa, _ = run_schedule(state, pts, 0.0, [0.5, 1.0], threads=1)
        b, sb, _ = run_schedule(state, pts, 0.0, [0.5, 1.0], threads=3)
        assert np.array_equal(sa, sb)
        assert np.array_equal(a, b, equal_nan=True)

    def test_aborted_rows_are_nan(self):
        amps = np.array([INV_SQRT2, -INV_SQRT2])
        state = ModeSuperposition([(1,), (2,)], amps, BoxGeometry(1))
        pts = np.array([[1.0], [math.pi / 3.0]])
        captured, status, _ = run_schedule(state, pts, 0.0, [1.0])
        assert status[0] == 0 and status[1] != 0
        assert not np.isnan(captured[0, 0, 0])
        assert np.isnan(captured[0, 1, 0])

    def test_backtrack_roundtrip(self):
        state = four_mode_2d()
        x0 = np.array([1.7, 0.9])
        cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
        fwd = integrate(state, x0, 0.0, 1.5, cfg)
        origin = backtrack(state, fwd.final_position, 1.5, cfg)
        assert np.abs(origin - x0).max() < 1e-7

    def test_backtrack_raises_on_abort(self):
        state = two_mode_1d()
        cfg = IntegratorConfig(max_steps=2)
        with pytest.raises(ConfigurationError):
            backtrack(state, np.array([1.5]), 1.0, cfg)

    def test_backtrack_many_at_zero_is_identity(self):
        state = four_mode_2d()
        pts = np.array([[0.5, 0.5], [2.0, 2.0]])
        origins, status = backtrack_many(state, pts, 0.0)
        assert np.array_equal(origins, pts)
        assert np.all(status == 0)


class TestBornMany:
    def test_matches_pointwise_evaluation(self):
        for state in (two_mode_1d(), four_mode_2d(), entangled(event=0.5),
                      ExpandingBoxState([(1,), (2,)],
                                        [INV_SQRT2, INV_SQRT2], rate=1.0)):
            dim = len(state.sides_at(0.9))
            rng = np.random.default_rng(5)
            sides = state.sides_at(0.9)
            pts = np.column_stack([rng.uniform(0.1, s - 0.1, 6) for s in sides])
            out = born_many(state, pts, 0.9)
            for i in range(pts.shape[0]):
                ref = state.evaluate(pts[i][:dim], 0.9).density
                assert out[i] == pytest.approx(ref, rel=1e-12, abs=1e-300)

    def test_entangled_uses_pre_density_before_event(self):
        state = entangled(event=0.5)
        pts = np.array([[1.0, 2.0]])
        pre = born_many(state, pts, 0.49)[0]
        ref = state.evaluate(np.array([1.0, 2.0]), 0.49).density
        assert pre == pytest.approx(ref, rel=1e-12)


class TestThreadCount:
    def test_explicit_wins(self):
        assert thread_count(3) == 3

    def test_zero_means_hardware(self, monkeypatch):
        monkeypatch.delenv("SUBQUANTUM_THREADS", raising=False)
        assert thread_count(0) >= 1

    def test_env_variable(self, monkeypatch):
        monkeypatch.setenv("SUBQUANTUM_THREADS", "2")
        assert thread_count() == 2

    def test_rejects_negative(self):
        with pytest.raises(ConfigurationError):
            thread_count(-1)


class TestDensityCeiling:
    def test_close_to_true_peak(self):
        state = ModeSuperposition([(1, 1)], [1.0], BoxGeometry(2))
        peak = density_ceiling(state)
        assert peak == pytest.approx((2.0 / L) ** 2, rel=1e-3)

    def test_cached_on_state(self):
        state = two_mode_1d()
        a = density_ceiling(state)
        assert density_ceiling(state) == a
