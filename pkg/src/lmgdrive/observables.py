"""Derived quantities: fidelities, instantaneous occupations, purity, timescales.

Everything here is a pure function of (state, spectrum) pairs.  Occupation
analysis along a trajectory re-diagonalizes the instantaneous Hamiltonian at
each sample; diagonalizations are cached per control point so dense output
grids stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .driving import DrivePath, DriveSchedule
from .heom import Trajectory
from .spin_model import ControlPoint, Spectrum, SpinSystem, build_hamiltonian, parity_operator

__all__ = [
    "FidelityResult",
    "fidelity_f1",
    "fidelity_f2",
    "occupations",
    "purity",
    "parity_expectation",
    "spectrum_cache",
    "trajectory_occupations",
    "trajectory_table",
    "TRAJECTORY_COLUMNS",
    "adiabatic_timescale",
]


@dataclass(frozen=True)
class FidelityResult:
    value: float
    kind: str  # "F1" or "F2"
    target: ControlPoint | None = None

    def __post_init__(self) -> None:
        if not (-1e-9 <= self.value <= 1.0 + 1e-9):
            raise ValueError(f"fidelity {self.value} outside [0, 1]")


def fidelity_f1(
    rho: np.ndarray, spectrum: Spectrum, target: ControlPoint | None = None
) -> FidelityResult:
    """Ground-state overlap <E_0|rho|E_0> of the final state."""
    g = spectrum.states[:, 0]
    value = float(np.real(g.conj() @ rho @ g))
    return FidelityResult(value=min(max(value, 0.0), 1.0 + 1e-9), kind="F1", target=target)


def fidelity_f2(
    rho: np.ndarray, spectrum: Spectrum, target: ControlPoint | None = None
) -> FidelityResult:
    """Overlap with the lowest quasidegenerate pair, <E_0|rho|E_0> + <E_1|rho|E_1>.

    The pair is always (E_0, E_1) by index.  Meaningful on the chi = 0 path,
    where the broken-symmetry phase makes those two states exponentially close.
    """
    value = 0.0
    for n in (0, 1):
        v = spectrum.states[:, n]
        value += float(np.real(v.conj() @ rho @ v))
    return FidelityResult(value=min(max(value, 0.0), 1.0 + 1e-9), kind="F2", target=target)


def occupations(rho: np.ndarray, spectrum: Spectrum) -> np.ndarray:
    """P_n = <E_n|rho|E_n> for every instantaneous eigenstate."""
    return np.real(np.einsum("in,ij,jn->n", spectrum.states.conj(), rho, spectrum.states))


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def parity_expectation(rho: np.ndarray, sys: SpinSystem) -> float:
    """tr[P rho]; conserved on chi = 0 drives with theta = 0 coupling."""
    p = parity_operator(sys)
    return float(np.real(np.trace(p @ rho)))


def spectrum_cache(sys: SpinSystem, renorm: int = 0, q: float = 0.0, theta: float = 0.0):
    """Return a point -> (energies, states) diagonalizer memoized on (lam, chi)."""
    cache: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}

    def at(lam: float, chi: float) -> tuple[np.ndarray, np.ndarray]:
        key = (round(float(lam), 12), round(float(chi), 12))
        hit = cache.get(key)
        if hit is None:
            h = build_hamiltonian(sys, ControlPoint(lam, chi), renorm=renorm, q=q, theta=theta)
            hit = np.linalg.eigh(h)
            cache[key] = hit
        return hit

    return at


def trajectory_occupations(
    traj: Trajectory,
    sys: SpinSystem,
    schedule: DriveSchedule,
    renorm: int = 0,
    q: float = 0.0,
    theta: float = 0.0,
) -> np.ndarray:
    """(n_times, N+1) matrix of instantaneous eigenbasis populations."""
    at = spectrum_cache(sys, renorm=renorm, q=q, theta=theta)
    out = np.zeros((len(traj.times), sys.dim))
    for i, (t, rho) in enumerate(zip(traj.times, traj.states)):
        lam, chi = schedule.path.at(schedule.s_at(float(t)))
        _, states = at(float(lam), float(chi))
        out[i] = np.real(np.einsum("in,ij,jn->n", states.conj(), rho, states))
    return out


TRAJECTORY_COLUMNS = "t, s, lambda, chi, trace, purity"  # then P_0 ... P_N


def trajectory_table(
    traj: Trajectory,
    sys: SpinSystem,
    schedule: DriveSchedule,
    renorm: int = 0,
    q: float = 0.0,
    theta: float = 0.0,
) -> tuple[list[str], np.ndarray]:
    """Header and rows for the trajectory CSV: t, s, lambda, chi, trace, purity, P_n."""
    pops = trajectory_occupations(traj, sys, schedule, renorm=renorm, q=q, theta=theta)
    header = ["t", "s", "lambda", "chi", "trace", "purity"] + [
        f"P_{n}" for n in range(sys.dim)
    ]
    rows = np.zeros((len(traj.times), 6 + sys.dim))
    for i, (t, rho) in enumerate(zip(traj.times, traj.states)):
        s = schedule.s_at(float(t))
        lam, chi = schedule.path.at(s)
        rows[i, :6] = [t, s, lam, chi, float(np.real(np.trace(rho))), purity(rho)]
        rows[i, 6:] = pops[i]
    return header, rows


def adiabatic_timescale(sys: SpinSystem, path: DrivePath, n_grid: int = 2001) -> float:
    """Two-level Landau-Zener timescale for the E_0/E_1 avoided crossing.

    Scans Delta_10(s) on a dense grid and returns the maximum of
    2|dDelta/ds| / (pi Delta^2), which peaks on the flanks of the crossing
    where the diabatic slope meets the minimal gap.  Drives with
    t_F well above this value can be expected to stay adiabatic.
    """
    s_grid = np.linspace(0.0, 1.0, n_grid)
    gaps = np.zeros(n_grid)
    for i, s in enumerate(s_grid):
        lam, chi = path.at(s)
        h = build_hamiltonian(sys, ControlPoint(float(lam), float(chi)))
        energies = np.linalg.eigvalsh(h)
        gaps[i] = energies[1] - energies[0]
    dgap = np.gradient(gaps, s_grid)
    if np.max(np.abs(dgap)) < 1e-12 * max(np.max(gaps), 1.0):
        raise ValueError("gap is constant along the path; no crossing to resolve")
    k_min = int(np.argmin(gaps))
    if k_min in (0, n_grid - 1):
        raise ValueError(
            f"gap minimum sits at the scan boundary (s={s_grid[k_min]:.3f}); "
            "widen the path before estimating a crossing timescale"
        )
    return float(np.max(2.0 * np.abs(dgap) / (np.pi * gaps**2)))
