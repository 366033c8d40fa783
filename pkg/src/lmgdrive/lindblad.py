"""Time-dependent Lindblad dynamics in the instantaneous eigenbasis.

The comparison solver for the hierarchy: at each instant the coupling
operator Q is decomposed over the Bohr frequencies of H_S(t),

    S(eps) = sum_{E_m - E_n = eps} |E_n><E_n| Q |E_m><E_m| ,

and the master equation

    d rho/dt = -i [H_S + H_L, rho]
               + (1/N) sum_eps Gamma(eps) ( S rho S+ - 1/2 {S+ S, rho} )

is integrated with rates

    Gamma(eps) = 2 [1 + n_B(eps)] [ J(eps) Theta(eps) - J(-eps) Theta(-eps) ],
    Gamma(0)   = 4 q T / gamma,

which satisfy detailed balance exactly, so the instantaneous Gibbs state of
H_S is the fixed point for a frozen Hamiltonian.  H_L is the Lamb-shift
correction assembled from the bath-expansion coefficients; it commutes with
H_S by construction.

The decomposition is rebuilt at every integrator evaluation from the
instantaneous spectrum — through the avoided-crossing region the eigenbasis
rotates quickly and stale jump operators would break detailed balance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .bath import BathModel, expansion_arrays, spectral_density
from .driving import DriveSchedule
from .heom import SolverConfig, Trajectory, _validate_initial_state, hamiltonian_of_time
from .spin_model import SpinSystem, build_coupling_operator

__all__ = [
    "JumpDecomposition",
    "jump_operators",
    "rate",
    "lamb_shift",
    "lindblad_evolve",
]

#: Gap binning tolerance, relative to the spectral range.
BIN_RTOL = 1e-9


@dataclass(frozen=True)
class JumpDecomposition:
    """Binned Bohr frequencies with their jump operators (eigenbasis matrices)."""

    gaps: np.ndarray
    jump_ops: list[np.ndarray]

    def reconstruct(self) -> np.ndarray:
        """sum_eps S(eps); equals Q in the eigenbasis (completeness)."""
        return sum(self.jump_ops)


def _binned_gaps(energies: np.ndarray, tol: float) -> list[float]:
    diffs = np.sort((energies[None, :] - energies[:, None]).ravel())
    bins: list[list[float]] = [[float(diffs[0])]]
    for value in diffs[1:]:
        if value - bins[-1][-1] <= tol:
            bins[-1].append(float(value))
        else:
            bins.append([float(value)])
    return [float(np.mean(b)) for b in bins]


def jump_operators(
    energies: np.ndarray, states: np.ndarray, coupling: np.ndarray, bin_tol: float | None = None
) -> JumpDecomposition:
    """Decompose Q over binned Bohr frequencies eps = E_m - E_n.

    Matrices are returned in the eigenbasis: S(eps)[n, m] = <E_n|Q|E_m> on the
    (n, m) pairs whose gap falls in the eps bin, zero elsewhere.
    """
    if bin_tol is None:
        bin_tol = BIN_RTOL * max(np.abs(energies).max(), 1.0)
    q_eig = states.conj().T @ coupling @ states
    gap_matrix = energies[None, :] - energies[:, None]  # eps for element (n, m)
    gaps = _binned_gaps(energies, bin_tol)
    ops = []
    for eps in gaps:
        mask = np.abs(gap_matrix - eps) <= bin_tol + 1e-15 * max(abs(eps), 1.0)
        ops.append(np.where(mask, q_eig, 0.0))
    return JumpDecomposition(gaps=np.array(gaps), jump_ops=ops)


def rate(bath: BathModel, eps: float) -> float:
    """Dissipation rate Gamma(eps); continuous at eps = 0 with value 4qT/gamma."""
    if eps == 0.0:
        return 4.0 * bath.q * bath.temperature / bath.gamma
    n_bose = 1.0 / np.expm1(bath.beta * eps)
    j_part = spectral_density(bath, eps) if eps > 0 else -spectral_density(bath, -eps)
    return float(2.0 * (1.0 + n_bose) * j_part)


def _lamb_coefficient(bath: BathModel, eps: float, c: np.ndarray, nu: np.ndarray) -> float:
    """Re[ c_0 eps/(gamma^2+eps^2) + sum_k c_k eps/(nu_k^2+eps^2) ]."""
    val = c[0] * eps / (bath.gamma**2 + eps**2)
    if len(c) > 1:
        val = val + np.sum(c[1:] * eps / (nu[1:] ** 2 + eps**2))
    return float(np.real(val))


def lamb_shift(
    bath: BathModel, decomposition: JumpDecomposition, n_qubits: int
) -> np.ndarray:
    """Lamb-shift Hamiltonian (eigenbasis), (1/N) sum_eps kappa(eps) S+(eps) S(eps).

    The Matsubara sum is truncated at the bath's M; the neglected tail is
    O(sum_{k>M} c_k/nu_k^2) and shrinks with the terminator residual.
    """
    c, nu = expansion_arrays(bath)
    dim = decomposition.jump_ops[0].shape[0]
    h_lamb = np.zeros((dim, dim), dtype=complex)
    for eps, s_op in zip(decomposition.gaps, decomposition.jump_ops):
        kappa = _lamb_coefficient(bath, eps, c, nu)
        if kappa:
            h_lamb += kappa * (s_op.conj().T @ s_op)
    return h_lamb / n_qubits


def lamb_tail_bound(bath: BathModel) -> float:
    """Crude bound on the neglected Lamb-shift Matsubara tail."""
    k = bath.n_matsubara + 1
    nu = 2.0 * np.pi * k * bath.temperature
    # sum_{k>M} c_k/nu_k^2 ~ 4 q gamma T sum 1/nu_k^3 <= 4qgT * integral
    return 4.0 * bath.q * bath.gamma * bath.temperature / (2.0 * np.pi * bath.temperature * nu**2)


def _dissipator_eigenbasis(
    bath: BathModel, decomposition: JumpDecomposition, rho_eig: np.ndarray, n_qubits: int
) -> np.ndarray:
    out = np.zeros_like(rho_eig)
    for eps, s_op in zip(decomposition.gaps, decomposition.jump_ops):
        g = rate(bath, eps)
        if g == 0.0:
            continue
        s_rho = s_op @ rho_eig
        ss = s_op.conj().T @ s_op
        out += g * (s_rho @ s_op.conj().T - 0.5 * (ss @ rho_eig + rho_eig @ ss))
    return out / n_qubits


def lindblad_evolve(
    rho0: np.ndarray,
    sys: SpinSystem,
    schedule: DriveSchedule,
    bath: BathModel,
    config: SolverConfig | None = None,
    theta: float = 0.0,
    renorm: int = 0,
    output_times: np.ndarray | None = None,
    include_lamb_shift: bool = True,
) -> Trajectory:
    """Integrate the time-dependent Lindblad equation along a drive."""
    config = config or SolverConfig()
    _validate_initial_state(np.asarray(rho0, dtype=complex))
    if output_times is None:
        output_times = np.linspace(0.0, schedule.t_final, config.n_outputs)
    output_times = np.asarray(output_times, dtype=float)
    h_at = hamiltonian_of_time(sys, schedule, renorm=renorm, q=bath.q, theta=theta)
    coupling = build_coupling_operator(sys, theta)
    dim = sys.dim

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        rho = y.reshape(dim, dim)
        h = h_at(t)
        energies, states = np.linalg.eigh(h)
        deco = jump_operators(energies, states, coupling)
        rho_eig = states.conj().T @ rho @ states
        drho_eig = _dissipator_eigenbasis(bath, deco, rho_eig, sys.n_qubits)
        if include_lamb_shift:
            h_lamb = lamb_shift(bath, deco, sys.n_qubits)
            drho_eig += -1j * (h_lamb @ rho_eig - rho_eig @ h_lamb)
        drho = states @ drho_eig @ states.conj().T
        drho += -1j * (h @ rho - rho @ h)
        return drho.ravel()

    sol = solve_ivp(
        rhs,
        (0.0, schedule.t_final),
        np.asarray(rho0, dtype=complex).ravel(),
        t_eval=output_times,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        method="RK45",
    )
    if not sol.success:
        raise RuntimeError(f"Lindblad integration failed: {sol.message}")
    states = sol.y.T.reshape(-1, dim, dim)
    traces = np.einsum("tii->t", states).real
    drift = float(np.abs(traces - 1.0).max())
    if not np.isfinite(drift) or drift > 1e-4:
        raise RuntimeError(f"trace drift {drift:.2e} exceeds 1e-4")
    states = 0.5 * (states + np.conj(np.transpose(states, (0, 2, 1))))
    return Trajectory(
        times=output_times,
        states=states,
        trace_drift=drift,
        solver="lindblad",
        n_rhs_evals=int(sol.nfev),
    )
