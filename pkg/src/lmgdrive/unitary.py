"""Closed-system reference propagation for driven spin Hamiltonians.

Independent of the hierarchy solver on purpose: the density matrix is
advanced with a midpoint-exponential (first-order Magnus) rule,

    rho(t+h) = U rho(t) U†,   U = exp(-i H(t + h/2) h),

with the exponential taken through exact diagonalization of the small
(N+1)-dimensional Hamiltonian.  This is the oracle the q = 0 limit of the
open-system solvers is checked against, and the fast route for q = 0
parameter sweeps.
"""

from __future__ import annotations

import numpy as np

from .driving import DriveSchedule

__all__ = ["unitary_evolve", "propagator"]


def _step_unitaries(hamiltonian_at, times: np.ndarray) -> list[np.ndarray]:
    out = []
    for t0, t1 in zip(times[:-1], times[1:]):
        h = hamiltonian_at(0.5 * (t0 + t1))
        energies, states = np.linalg.eigh(h)
        phases = np.exp(-1j * energies * (t1 - t0))
        out.append((states * phases) @ states.conj().T)
    return out


def default_step_count(schedule: DriveSchedule, steps_per_unit: float = 4.0) -> int:
    """Resolution heuristic: a few steps per unit time, at least 2000 per drive."""
    return int(max(2000, steps_per_unit * schedule.t_final))


def propagator(
    hamiltonian_at,
    t_final: float,
    n_steps: int,
) -> np.ndarray:
    """Total unitary U(t_final, 0) for a time-dependent Hamiltonian."""
    times = np.linspace(0.0, t_final, n_steps + 1)
    u = None
    for step in _step_unitaries(hamiltonian_at, times):
        u = step if u is None else step @ u
    return u


def unitary_evolve(
    rho0: np.ndarray,
    hamiltonian_at,
    t_final: float,
    output_times: np.ndarray,
    n_steps: int | None = None,
) -> np.ndarray:
    """Propagate rho0 through the Liouville-von Neumann equation.

    Returns the density matrix at each requested output time (the grid is
    refined so that every output time is a step boundary).
    """
    output_times = np.asarray(output_times, dtype=float)
    if n_steps is None:
        n_steps = int(max(2000, 4 * t_final))
    # merge a uniform grid with the output times so samples are exact steps
    grid = np.union1d(np.linspace(0.0, t_final, n_steps + 1), output_times)
    rho = rho0.astype(complex)
    out = np.empty((len(output_times),) + rho.shape, dtype=complex)
    emit = 0
    if np.isclose(output_times[emit], 0.0):
        out[emit] = rho
        emit += 1
    for (t0, t1), u in zip(zip(grid[:-1], grid[1:]), _step_unitaries(hamiltonian_at, grid)):
        rho = u @ rho @ u.conj().T
        while emit < len(output_times) and output_times[emit] <= t1 * (1 + 1e-12):
            out[emit] = rho
            emit += 1
    while emit < len(output_times):  # guard against rounding at t_final
        out[emit] = rho
        emit += 1
    return out
