import numpy as np
import pytest

from lmgdrive import (
    ControlPoint,
    DrivePath,
    build_hamiltonian,
    build_schedule,
    build_spin_operators,
    first_order_path,
    geometric_length,
    metric_tensor,
    second_order_path,
)
from lmgdrive.driving import path_by_label, schedule_table


class TestPaths:

    def test_endpoints(self):
        p1 = first_order_path()
        assert np.allclose(p1.at(0.0), [0.0, 0.0])
        assert np.allclose(p1.at(1.0), [0.25, 1.2])
        p2 = second_order_path()
        assert np.allclose(p2.at(0.5), [1.0, 0.0])

    def test_planar_lengths(self):
        assert np.isclose(first_order_path().planar_length, np.hypot(0.25, 1.2))
        assert second_order_path().planar_length == 2.0

    def test_by_label(self):
        assert path_by_label("first_order").label == "first_order"
        assert path_by_label("second_order").end.lam == 2.0
        with pytest.raises(ValueError, match="unknown path"):
            path_by_label("third_order")


class TestMetricTensor:

    def test_origin_closed_forms(self, sys10, sys4):
        """At (0,0): g_ll = (N-1)/(32N), g_cc = 1/(4N), g_lc = 0."""
        g = metric_tensor(sys10, ControlPoint(0.0, 0.0))
        assert np.isclose(g.g_ll, 9.0 / 320.0, atol=1e-12)
        assert np.isclose(g.g_cc, 1.0 / 40.0, atol=1e-12)
        assert abs(g.g_lc) < 1e-13
        g4 = metric_tensor(sys4, ControlPoint(0.0, 0.0))
        assert np.isclose(g4.g_ll, 3.0 / 128.0, atol=1e-12)
        assert np.isclose(g4.g_cc, 1.0 / 16.0, atol=1e-12)

    def test_positive_semidefinite(self, sys10, rng):
        for _ in range(20):
            point = ControlPoint(rng.uniform(0, 2), rng.uniform(0, 1.1))
            m = metric_tensor(sys10, point).as_matrix()
            assert np.allclose(m, m.T)
            assert np.linalg.eigvalsh(m).min() > -1e-14

    def test_finite_difference_consistency(self, sys10, rng):
        """1 - |<E0(L)|E0(L+dL)>|^2 = g_uv dL^u dL^v + O(|dL|^3) at 20 random points."""
        for _ in range(20):
            lam, chi = rng.uniform(0, 2), rng.uniform(0, 1.1)
            g = metric_tensor(sys10, ControlPoint(lam, chi))
            d = rng.normal(size=2)
            d *= 1e-4 / np.hypot(*d)
            _, v0 = np.linalg.eigh(build_hamiltonian(sys10, ControlPoint(lam, chi)))
            _, v1 = np.linalg.eigh(
                build_hamiltonian(sys10, ControlPoint(lam + d[0], chi + d[1])))
            lhs = 1.0 - abs(np.vdot(v0[:, 0], v1[:, 0])) ** 2
            rhs = g.quadratic_form(d)
            assert abs(lhs - rhs) / rhs < 1e-2

    def test_degenerate_point_rejected(self):
        # N=40 past the chi=0 transition: doublet gap ~ 1e-13
        sys40 = build_spin_operators(40)
        with pytest.raises(ValueError, match="quasidegenerate") as excinfo:
            metric_tensor(sys40, ControlPoint(3.0, 0.0))
        assert "gap=" in str(excinfo.value)


class TestGeometricLength:

    def test_zero_path(self, sys10):
        flat = DrivePath(ControlPoint(1.0, 0.3), ControlPoint(1.0, 0.3))
        assert geometric_length(sys10, flat) == 0.0

    def test_grid_converged(self, sys10):
        for path in (first_order_path(), second_order_path()):
            l1 = geometric_length(sys10, path, grid_size=2048)
            l2 = geometric_length(sys10, path, grid_size=4096)
            assert abs(l2 - l1) / l1 < 1e-4

    def test_frozen_values(self, sys10):
        assert np.isclose(geometric_length(sys10, first_order_path()), 2.622663, rtol=1e-5)
        assert np.isclose(geometric_length(sys10, second_order_path()), 1.069674, rtol=1e-5)

    def test_overlap_sum_oracle(self, sys10):
        """l matches the accumulated Provost-Vallee distance elements
        sum sqrt(1 - |<E0(s_i)|E0(s_{i+1})>|^2) on a fine grid."""
        for path in (first_order_path(), second_order_path()):
            s = np.linspace(0.0, 1.0, 4097)
            ground = []
            for si in s:
                lam, chi = path.at(float(si))
                _, v = np.linalg.eigh(build_hamiltonian(sys10, ControlPoint(lam, chi)))
                ground.append(v[:, 0])
            acc = sum(
                np.sqrt(max(0.0, 1.0 - abs(np.vdot(a, b)) ** 2))
                for a, b in zip(ground[:-1], ground[1:])
            )
            assert abs(acc - geometric_length(sys10, path)) / acc < 5e-3

    def test_degeneracy_error_names_position(self):
        sys40 = build_spin_operators(40)
        long_axis = DrivePath(ControlPoint(0.0, 0.0), ControlPoint(4.0, 0.0))
        with pytest.raises(ValueError, match="at s="):
            geometric_length(sys40, long_axis)


class TestSchedules:

    def test_validation(self, sys10):
        path = first_order_path()
        with pytest.raises(ValueError, match="t_final"):
            build_schedule(sys10, path, "A", 0.0)
        with pytest.raises(ValueError, match="grid_size"):
            build_schedule(sys10, path, "B", 10.0, grid_size=100)
        with pytest.raises(ValueError, match="protocol"):
            build_schedule(sys10, path, "C", 10.0)

    def test_boundaries_and_monotone(self, sys10):
        for protocol in ("A", "B"):
            sched = build_schedule(sys10, first_order_path(), protocol, 50.0)
            assert sched.s_at(0.0) == 0.0
            assert sched.s_at(50.0) == 1.0
            assert np.all(np.diff(sched.times) > 0)
            assert np.all(np.diff(sched.s_values) > 0)

    def test_protocol_a_exact(self, sys10):
        sched = build_schedule(sys10, second_order_path(), "A", 8.0)
        assert sched.s_at(2.0) == 0.25
        assert np.allclose(sched.lambda_at(4.0).as_array(), [1.0, 0.0])
        assert np.isclose(sched.planar_speed(3.3), 2.0 / 8.0, rtol=1e-6)

    def test_planar_speed_values(self, sys10):
        sched = build_schedule(sys10, first_order_path(), "A", 10.0)
        u = np.hypot(0.25, 1.2) / 10.0
        for t in (0.0, 2.5, 9.9):
            assert np.isclose(sched.planar_speed(t), u, rtol=1e-6)
        with pytest.raises(ValueError, match="outside"):
            sched.planar_speed(10.5)
        with pytest.raises(ValueError, match="outside"):
            sched.s_at(-0.1)

    def test_critical_crossing_time(self, sys10):
        # on protocol A the first-order path hits the critical line at s ~ 0.566
        sched = build_schedule(sys10, first_order_path(), "A", 100.0)
        point = sched.lambda_at(56.63634939998866)
        from lmgdrive import critical_lambda
        assert abs(point.lam - critical_lambda(point.chi)) < 1e-9

    def test_protocol_b_constant_speed(self, sys10):
        """Geometric speed stays within 1% of l(1)/t_F for grid_size >= 1024."""
        for path in (first_order_path(), second_order_path()):
            for grid in (1024, 2048):
                sched = build_schedule(sys10, path, "B", 100.0, grid_size=grid)
                ts = np.linspace(0.0, 100.0, 1501)[1:-1]
                v = np.array([sched.geometric_speed_at(t) for t in ts])
                assert v.max() / v.min() < 1.01
                assert np.isclose(v.mean(), sched.geometric_speed, rtol=5e-3)

    def test_protocol_b_slows_at_metric_peak(self, sys10):
        """u(t) attains its minimum where the metric length element peaks."""
        path = first_order_path()
        sched = build_schedule(sys10, path, "B", 100.0)
        i_peak = int(np.argmax(sched.speed_profile))
        s_peak = sched.s_values[i_peak]
        ts = np.linspace(0.5, 99.5, 3001)
        u = np.array([sched.planar_speed(t) for t in ts])
        s_slowest = sched.s_at(ts[int(np.argmin(u))])
        assert abs(s_slowest - s_peak) < 0.01

    def test_second_order_minimum_past_midpoint(self, sys10):
        sched = build_schedule(sys10, second_order_path(), "B", 100.0)
        ts = np.linspace(0.5, 99.5, 2001)
        u = np.array([sched.planar_speed(t) for t in ts])
        assert sched.s_at(ts[int(np.argmin(u))]) > 0.5

    def test_flat_metric_reduces_to_protocol_a(self, sys10):
        """Constant w(s) makes the arc length linear, so B collapses onto A."""
        short = DrivePath(ControlPoint(0.0, 0.0), ControlPoint(0.05, 0.0))
        sched = build_schedule(sys10, short, "B", 20.0)
        ts = np.linspace(0.0, 20.0, 101)
        assert max(abs(sched.s_at(t) - t / 20.0) for t in ts) < 0.01

    def test_zero_length_path(self, sys10):
        flat = DrivePath(ControlPoint(1.0, 0.3), ControlPoint(1.0, 0.3))
        sched = build_schedule(sys10, flat, "B", 10.0)
        assert sched.s_at(5.0) == 0.5  # uniform fallback
        assert sched.geometric_speed == 0.0
        assert sched.geometric_speed_at(5.0) == 0.0

    def test_degeneracy_error_in_build(self):
        sys40 = build_spin_operators(40)
        bad = DrivePath(ControlPoint(0.0, 0.0), ControlPoint(4.0, 0.0))
        with pytest.raises(ValueError, match="at s="):
            build_schedule(sys40, bad, "B", 10.0)


class TestScheduleTable:

    def test_columns(self, sys10):
        sched = build_schedule(sys10, first_order_path(), "A", 10.0)
        table = schedule_table(sched, n_samples=64)
        assert table.shape == (64, 6)
        t, s, lam, chi, u, v = table.T
        assert np.allclose(t, np.linspace(0.0, 10.0, 64))
        assert np.all(np.diff(s) > 0)
        assert np.allclose(lam, 0.25 * s) and np.allclose(chi, 1.2 * s)
        assert np.allclose(u, first_order_path().planar_length / 10.0, rtol=1e-6)

    def test_protocol_b_flat_v_column(self, sys10):
        sched = build_schedule(sys10, first_order_path(), "B", 100.0)
        table = schedule_table(sched, n_samples=256)
        v = table[1:-1, 5]
        assert v.max() / v.min() < 1.01
