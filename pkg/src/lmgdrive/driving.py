"""Driving schedules Lambda(t) along straight control-plane paths.

Two protocols:

  A -- constant planar speed: s(t) = t/t_F, the control point moves
       uniformly along the segment.
  B -- constant geometric speed: ds/dt is rescaled so that the ground-state
       (Provost-Vallee) metric length is traversed at a constant rate.  The
       schedule slows down exactly where the metric blows up, i.e. around
       the finite-size precursor of the phase transition.

The metric tensor is evaluated from the spectral sum

    g_uv = Re sum_{n>0} <E0| dH_u |En><En| dH_v |E0> / (E_n - E_0)^2,

which is exact at the level of the diagonalization; finite-difference
overlaps are kept in the tests as an independent oracle.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .spin_model import ControlPoint, SpinSystem, build_hamiltonian

__all__ = [
    "DrivePath",
    "DriveSchedule",
    "MetricTensor",
    "first_order_path",
    "second_order_path",
    "metric_tensor",
    "geometric_length",
    "build_schedule",
]

#: Ground-state gap below which the metric is considered singular.
METRIC_GAP_FLOOR = 1e-10


@dataclass(frozen=True)
class DrivePath:
    """Straight segment start -> end in the control plane."""

    start: ControlPoint
    end: ControlPoint
    label: str = "custom"

    def at(self, s: float | np.ndarray) -> np.ndarray:
        """Control point(s) at fractional position s in [0, 1], shape (..., 2)."""
        delta = self.end.as_array() - self.start.as_array()
        return self.start.as_array() + np.multiply.outer(np.asarray(s, float), delta)

    @property
    def delta(self) -> np.ndarray:
        return self.end.as_array() - self.start.as_array()

    @property
    def planar_length(self) -> float:
        return float(np.hypot(*self.delta))


def first_order_path() -> DrivePath:
    """(0,0) -> (0.25, 1.2): crosses the critical line where the transition is first order."""
    return DrivePath(ControlPoint(0.0, 0.0), ControlPoint(0.25, 1.2), "first_order")


def second_order_path() -> DrivePath:
    """(0,0) -> (2, 0): crosses the chi = 0 critical point at lambda = 1 (second order)."""
    return DrivePath(ControlPoint(0.0, 0.0), ControlPoint(2.0, 0.0), "second_order")


def path_by_label(label: str) -> DrivePath:
    if label == "first_order":
        return first_order_path()
    if label == "second_order":
        return second_order_path()
    raise ValueError(f"unknown path label: {label!r}")


@dataclass(frozen=True)
class MetricTensor:
    g_ll: float
    g_lc: float
    g_cc: float

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.g_ll, self.g_lc], [self.g_lc, self.g_cc]])

    def quadratic_form(self, v: np.ndarray) -> float:
        return float(v @ self.as_matrix() @ v)


def _gradients(sys: SpinSystem, point: ControlPoint) -> tuple[np.ndarray, np.ndarray]:
    """dH/dlambda and dH/dchi at a control point."""
    n = sys.n_qubits
    shifted = sys.jz + (n / 2.0) * np.eye(sys.dim)
    d_lam = -(sys.jx @ sys.jx) / n
    d_chi = -(sys.jx @ shifted + shifted @ sys.jx + 2.0 * point.chi * (shifted @ shifted)) / n
    return d_lam, d_chi


def metric_tensor(sys: SpinSystem, point: ControlPoint) -> MetricTensor:
    """Ground-state metric at a control point (spectral-sum evaluation)."""
    h = build_hamiltonian(sys, point)
    energies, states = np.linalg.eigh(h)
    gap = energies[1] - energies[0]
    scale = max(abs(energies[0]), abs(energies[-1]), 1.0)
    if gap < METRIC_GAP_FLOOR * scale:
        raise ValueError(
            f"quasidegenerate ground state at (lam={point.lam}, chi={point.chi}): gap={gap:.3e}"
        )
    d_lam, d_chi = _gradients(sys, point)
    ground = states[:, 0]
    excited = states[:, 1:]
    denom = energies[1:] - energies[0]
    v_lam = excited.conj().T @ (d_lam @ ground) / denom
    v_chi = excited.conj().T @ (d_chi @ ground) / denom
    return MetricTensor(
        g_ll=float(np.real(v_lam.conj() @ v_lam)),
        g_lc=float(np.real(v_lam.conj() @ v_chi)),
        g_cc=float(np.real(v_chi.conj() @ v_chi)),
    )


def _speed_profile(sys: SpinSystem, path: DrivePath, s_grid: np.ndarray) -> np.ndarray:
    """w(s) = sqrt(g_uv Lambda'^u Lambda'^v) along the path."""
    delta = path.delta
    w = np.empty_like(s_grid)
    for i, s in enumerate(s_grid):
        lam, chi = path.at(float(s))
        try:
            g = metric_tensor(sys, ControlPoint(lam, chi))
        except ValueError as err:
            raise ValueError(f"metric degenerate at s={s:.6f}: {err}") from err
        w[i] = np.sqrt(max(g.quadratic_form(delta), 0.0))
    return w


_REFINE_REL = 5e-3
_REFINE_MAX_POINTS = 1 << 15


def _refine_speed_grid(
    sys: SpinSystem, path: DrivePath, s_grid: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Bisect cells where w jumps by more than 0.5% between neighbours."""
    for _ in range(32):
        if s_grid.size >= _REFINE_MAX_POINTS:
            break
        hi = np.maximum(w[1:], w[:-1])
        jumpy = np.abs(np.diff(w)) > _REFINE_REL * np.maximum(hi, 1e-300)
        wide = np.diff(s_grid) > 1e-10
        bad = np.flatnonzero(jumpy & wide)
        if bad.size == 0:
            break
        mids = 0.5 * (s_grid[bad] + s_grid[bad + 1])
        w_mids = _speed_profile(sys, path, mids)
        s_grid = np.insert(s_grid, bad + 1, mids)
        w = np.insert(w, bad + 1, w_mids)
    return s_grid, w


def geometric_length(sys: SpinSystem, path: DrivePath, grid_size: int = 2048) -> float:
    """Metric length of the path, l = int_0^1 w(s) ds (trapezoid rule)."""
    if path.planar_length == 0.0:
        return 0.0
    s_grid = np.linspace(0.0, 1.0, grid_size)
    w = _speed_profile(sys, path, s_grid)
    return float(np.trapezoid(w, s_grid))


@dataclass(frozen=True)
class DriveSchedule:
    """Monotone time table s(t) for one protocol over one path.

    lambda_at / s_at interpolate the table; protocol A bypasses the table
    and uses s = t/t_F exactly.
    """

    path: DrivePath
    t_final: float
    protocol: str  # "A" or "B"
    times: np.ndarray  # (G,) sample times, t[0] = 0, t[-1] = t_final
    s_values: np.ndarray  # (G,) fractional positions, s[0] = 0, s[-1] = 1
    geometric_speed: float  # l(1)/t_F, the protocol-B constant
    speed_profile: np.ndarray  # metric speed w(s) sampled at s_values

    def s_at(self, t: float) -> float:
        if t < -1e-9 * self.t_final or t > self.t_final * (1 + 1e-9):
            raise ValueError(f"time {t} outside [0, {self.t_final}]")
        t = min(max(t, 0.0), self.t_final)
        if self.protocol == "A":
            return t / self.t_final
        i = bisect_right(self.times, t)
        if i <= 0:
            return 0.0
        if i >= len(self.times):
            return 1.0
        t0, t1 = self.times[i - 1], self.times[i]
        s0, s1 = self.s_values[i - 1], self.s_values[i]
        return float(s0 + (s1 - s0) * (t - t0) / (t1 - t0))

    def lambda_at(self, t: float) -> ControlPoint:
        lam, chi = self.path.at(self.s_at(t))
        return ControlPoint(float(lam), float(chi))

    def control_array(self, t: float) -> np.ndarray:
        """(lambda, chi) without ControlPoint overhead -- the solver hot path."""
        return self.path.at(self.s_at(t))

    def planar_speed(self, t: float) -> float:
        """u(t) = |Lambda_F - Lambda_I| ds/dt, by central differences off the table."""
        dt = self.t_final * 1e-6
        lo, hi = max(t - dt, 0.0), min(t + dt, self.t_final)
        return self.path.planar_length * (self.s_at(hi) - self.s_at(lo)) / (hi - lo)

    def geometric_speed_at(self, t: float) -> float:
        """v(t) = w(s(t)) ds/dt; constant (= geometric_speed) under protocol B."""
        if self.path.planar_length == 0.0:
            return 0.0
        w = float(np.interp(self.s_at(t), self.s_values, self.speed_profile))
        return w * self.planar_speed(t) / self.path.planar_length


def build_schedule(
    sys: SpinSystem,
    path: DrivePath,
    protocol: str,
    t_final: float,
    grid_size: int = 2048,
) -> DriveSchedule:
    """Construct the s(t) table for protocol A or B.

    Protocol B samples the metric speed profile w(s) on a uniform s-grid,
    accumulates the arc length l(s) by the trapezoid rule and inverts
    t(s) = t_F l(s)/l(1) by monotone piecewise-linear interpolation.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if grid_size < 256:
        raise ValueError("grid_size must be at least 256")
    if protocol not in ("A", "B"):
        raise ValueError(f"unknown protocol {protocol!r}")
    s_grid = np.linspace(0.0, 1.0, grid_size)
    w = _speed_profile(sys, path, s_grid)
    total = float(np.trapezoid(w, s_grid))
    if protocol == "A" or total <= 0:
        # protocol A, or degenerate metric (zero-length path): uniform motion
        return DriveSchedule(path, t_final, protocol, s_grid * t_final, s_grid, total / t_final, w)
    # w is sharply peaked near an avoided crossing, so bisect grid cells until
    # neighbouring samples agree; otherwise the piecewise-linear inverse only
    # equalises cell-averaged speed and v(t) wobbles across the peak.
    s_grid, w = _refine_speed_grid(sys, path, s_grid, w)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(s_grid))])
    total = arc[-1]
    times = t_final * arc / total
    return DriveSchedule(path, t_final, "B", times, s_grid, total / t_final, w)


def schedule_table(schedule: DriveSchedule, n_samples: int = 512) -> np.ndarray:
    """Export table with columns t, s, lambda, chi, u, v (planar and geometric speed)."""
    ts = np.linspace(0.0, schedule.t_final, n_samples)
    rows = np.zeros((n_samples, 6))
    for i, t in enumerate(ts):
        s = schedule.s_at(t)
        lam, chi = schedule.path.at(s)
        rows[i] = [t, s, lam, chi, schedule.planar_speed(t), schedule.geometric_speed_at(t)]
    return rows
