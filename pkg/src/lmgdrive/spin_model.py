"""Collective-spin model of N mutually interacting qubits.

Everything lives in the permutation-symmetric subspace, which carries the
maximal quasispin j = N/2 and has dimension N+1.  The basis is |j, m> with
m ascending from -j to +j.  The model Hamiltonian

    H(lambda, chi) = jz - (1/N) [ lambda jx^2 + chi {jx, jz + N/2}
                                  + chi^2 (jz + N/2)^2 ]

has a line of ground-state quantum critical points lambda_c(chi); driving
the control point Lambda = (lambda, chi) across that line is the subject of
the rest of the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ControlPoint",
    "SpinSystem",
    "Spectrum",
    "build_spin_operators",
    "build_hamiltonian",
    "build_coupling_operator",
    "parity_operator",
    "eigendecompose",
    "thermal_state",
    "critical_lambda",
    "spectrum_scan",
]

#: Relative gap below which two levels are treated as degenerate
#: (quasidegenerate parity doublets behind the symmetry-breaking transition).
DEGENERACY_RTOL = 1e-10


@dataclass(frozen=True)
class ControlPoint:
    """A point Lambda = (lambda, chi) in the control plane."""

    lam: float
    chi: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lam) and np.isfinite(self.chi)):
            raise ValueError("control parameters must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.lam, self.chi], dtype=float)


@dataclass(frozen=True)
class SpinSystem:
    """Collective spin operators for N qubits in the symmetric subspace."""

    n_qubits: int
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    # cached interaction blocks, see build_hamiltonian
    _blocks: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.n_qubits + 1

    @property
    def j(self) -> float:
        return self.n_qubits / 2.0


def build_spin_operators(n_qubits: int) -> SpinSystem:
    """Return jx, jy, jz matrices in the |j, m> basis, m = -j ... +j."""
    if n_qubits < 2:
        raise ValueError(f"need at least 2 qubits, got {n_qubits}")
    j = n_qubits / 2.0
    m = np.arange(-j, j + 1)
    jz = np.diag(m).astype(complex)
    jplus = np.zeros((n_qubits + 1, n_qubits + 1), dtype=complex)
    for i in range(n_qubits):
        # <m+1| J+ |m> = sqrt(j(j+1) - m(m+1))
        jplus[i + 1, i] = np.sqrt(j * (j + 1) - m[i] * (m[i] + 1))
    jminus = jplus.conj().T
    jx = 0.5 * (jplus + jminus)
    jy = -0.5j * (jplus - jminus)
    return SpinSystem(n_qubits=n_qubits, jx=jx, jy=jy, jz=jz)


def _interaction_blocks(sys: SpinSystem) -> dict:
    """Cache the three Lambda-independent interaction matrices.

    H(Lambda) is assembled as jz - (lam/N) B_l - (chi/N) B_c - (chi^2/N) B_cc,
    so a time-dependent Hamiltonian costs three scalar multiply-adds.
    """
    if not sys._blocks:
        n = sys.n_qubits
        shifted = sys.jz + (n / 2.0) * np.eye(sys.dim)
        sys._blocks["lam"] = sys.jx @ sys.jx
        sys._blocks["chi"] = sys.jx @ shifted + shifted @ sys.jx
        sys._blocks["chi2"] = shifted @ shifted
    return sys._blocks


def build_hamiltonian(
    sys: SpinSystem,
    point: ControlPoint,
    renorm: int = 0,
    q: float = 0.0,
    theta: float = 0.0,
) -> np.ndarray:
    """System Hamiltonian at a control point, in units of the level splitting.

    With renorm=1 the environment counterterm (q/N) Q^2 is added, where Q is
    the system part of the coupling (build_coupling_operator); it compensates
    the static distortion a finite-q bath exerts on the spin Hamiltonian.
    """
    n = sys.n_qubits
    blocks = _interaction_blocks(sys)
    h = sys.jz - (point.lam / n) * blocks["lam"] - (point.chi / n) * blocks["chi"] \
        - (point.chi**2 / n) * blocks["chi2"]
    if renorm:
        qop = build_coupling_operator(sys, theta)
        h = h + (q / n) * (qop @ qop)
    return h


def build_coupling_operator(sys: SpinSystem, theta: float) -> np.ndarray:
    """System side of the system-environment coupling, Q = sin(theta) jx + cos(theta) jz."""
    return np.sin(theta) * sys.jx + np.cos(theta) * sys.jz


def parity_operator(sys: SpinSystem) -> np.ndarray:
    """Diagonal parity (-1)^(m + j); conserved by H whenever chi = 0."""
    j = sys.j
    m = np.arange(-j, j + 1)
    return np.diag((-1.0) ** np.rint(m + j)).astype(complex)


@dataclass(frozen=True)
class Spectrum:
    """Ordered eigendecomposition E_0 <= E_1 <= ... with a fixed phase convention."""

    energies: np.ndarray
    states: np.ndarray  # column k is |E_k>
    parities: np.ndarray | None = None

    @property
    def gap10(self) -> float:
        return float(self.energies[1] - self.energies[0])


def _fix_phases(states: np.ndarray) -> np.ndarray:
    """Make the largest-|component| entry of each eigenvector real positive.

    Ties on |component| are broken by the lowest basis index, so repeated
    diagonalizations of the same matrix give bitwise-identical vectors.
    """
    out = states.copy()
    mags = np.abs(out)
    for k in range(out.shape[1]):
        col = mags[:, k]
        i = int(np.flatnonzero(col == col.max())[0])
        ph = out[i, k]
        if ph != 0:
            out[:, k] *= np.abs(ph) / ph
    return out


def eigendecompose(h: np.ndarray, parity: np.ndarray | None = None) -> Spectrum:
    """Diagonalize a Hermitian matrix into a Spectrum.

    If a parity operator is supplied, each eigenvector is labelled by its
    parity expectation value rounded to +-1 (meaningful only when [H, P] = 0).
    """
    if np.abs(h - h.conj().T).max() > 1e-10:
        raise ValueError("matrix is not Hermitian within 1e-10")
    energies, states = np.linalg.eigh(h)
    states = _fix_phases(states)
    parities = None
    if parity is not None:
        expect = np.einsum("ik,ij,jk->k", states.conj(), parity, states).real
        parities = np.where(expect >= 0, 1, -1).astype(int)
    return Spectrum(energies=energies, states=states, parities=parities)


def thermal_state(spec: Spectrum, beta: float) -> np.ndarray:
    """Canonical density matrix exp(-beta H)/Z from an eigendecomposition.

    beta = numpy.inf selects the ground state; a quasidegenerate ground
    multiplet (relative gap < DEGENERACY_RTOL) becomes an equal mixture.
    """
    if beta < 0:
        raise ValueError("inverse temperature must be nonnegative")
    e = spec.energies
    if np.isinf(beta):
        scale = max(np.abs(e).max(), 1.0)
        degenerate = e - e[0] <= DEGENERACY_RTOL * scale
        p = degenerate / degenerate.sum()
    else:
        w = np.exp(-beta * (e - e[0]))  # shift by E_0 for stability
        p = w / w.sum()
    return (spec.states * p) @ spec.states.conj().T


def critical_lambda(chi: float) -> float:
    """Ground-state critical line lambda_c(chi) = 1 - chi^2/(1 - chi^2)."""
    if abs(chi) >= 1:
        raise ValueError(f"critical line is defined for |chi| < 1, got chi={chi}")
    return 1.0 - chi**2 / (1.0 - chi**2)


def spectrum_scan(
    sys: SpinSystem,
    start: ControlPoint,
    end: ControlPoint,
    n_points: int = 201,
    with_parity: bool = False,
):
    """Tabulate the spectrum along a straight segment of the control plane.

    Returns (s_grid, table) where table has one row per grid point:
    [s, lambda, chi, E_0 ... E_N, gap10] plus, with with_parity=True,
    the N+1 parity labels of the eigenvectors.  with_parity only makes
    sense on chi = 0 segments, where parity is conserved.
    """
    if n_points < 2:
        raise ValueError("scan needs at least 2 grid points")
    s_grid = np.linspace(0.0, 1.0, n_points)
    par = parity_operator(sys) if with_parity else None
    d = sys.dim
    width = 4 + d + (d if with_parity else 0)
    table = np.zeros((n_points, width))
    for i, s in enumerate(s_grid):
        lam = start.lam + s * (end.lam - start.lam)
        chi = start.chi + s * (end.chi - start.chi)
        spec = eigendecompose(build_hamiltonian(sys, ControlPoint(lam, chi)), parity=par)
        row = [s, lam, chi, *spec.energies, spec.gap10]
        if with_parity:
            row.extend(spec.parities)
        table[i] = row
    return s_grid, table


def scan_header(sys: SpinSystem, with_parity: bool = False) -> list[str]:
    """Column names matching the rows produced by spectrum_scan."""
    cols = ["s", "lambda", "chi"] + [f"E_{k}" for k in range(sys.dim)] + ["gap10"]
    if with_parity:
        cols += [f"parity_{k}" for k in range(sys.dim)]
    return cols
