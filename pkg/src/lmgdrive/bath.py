"""Drude-Lorentz bath: spectral density, correlation function, Matsubara expansion.

The environment is an Ohmic bath with Lorentzian cutoff,

    J(w) = 2 q gamma w / (gamma^2 + w^2),

held at temperature T.  Its correlation function C(t) = <B(t)B(0)> is
expanded as a finite sum of decaying exponentials

    C(t) ~ sum_{k=0..M} c_k exp(-nu_k t),

with the Drude pole (nu_0 = gamma, complex c_0) plus M bosonic Matsubara
terms (nu_k = 2 pi k T, real c_k).  The truncated Markovian remainder is
collected into the terminator coefficient Delta_M used by the hierarchy
solver's closure.

correlation_function is the slow reference oracle: it evaluates C(t) by
adaptive quadrature and is used in the tests to validate the expansion
coefficients, never inside the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import sici

__all__ = [
    "BathModel",
    "ExpansionTerm",
    "spectral_density",
    "correlation_function",
    "matsubara_expansion",
    "terminator_residual",
]

#: Relative tolerance for detecting a Matsubara frequency colliding with gamma.
POLE_RTOL = 1e-9


@dataclass(frozen=True)
class BathModel:
    """Bath parameters: coupling q, cutoff gamma, temperature T, expansion size M."""

    q: float
    gamma: float
    temperature: float
    n_matsubara: int

    def __post_init__(self) -> None:
        if self.q < 0:
            raise ValueError("coupling q must be nonnegative")
        if self.gamma <= 0 or self.temperature <= 0:
            raise ValueError("gamma and temperature must be positive")
        if self.n_matsubara < 0:
            raise ValueError("expansion size must be nonnegative")

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature


@dataclass(frozen=True)
class ExpansionTerm:
    coefficient: complex
    rate: float


def spectral_density(bath: BathModel, omega: float | np.ndarray):
    """J(w) = 2 q gamma w / (gamma^2 + w^2); odd in w."""
    omega = np.asarray(omega, dtype=float)
    out = 2.0 * bath.q * bath.gamma * omega / (bath.gamma**2 + omega**2)
    return out if out.ndim else float(out)


def _coth_halfbeta(bath: BathModel, omega: float) -> float:
    """coth(beta w / 2) with the w -> 0 singularity handled by its series."""
    x = 0.5 * bath.beta * omega
    if abs(x) < 1e-6:
        return 1.0 / x + x / 3.0
    return 1.0 / np.tanh(x)


def correlation_function(bath: BathModel, t: float, quad_tol: float = 1e-10) -> complex:
    """Reference C(t) by adaptive quadrature over the bath spectrum.

    C(t) = (1/pi) int_0^inf J(w) [ coth(beta w/2) cos(wt) - i sin(wt) ] dw.

    The oscillatory factors are treated with weighted (Fourier-type)
    quadrature on the half line, so the slowly decaying tail of J does not
    bias the result.  At t = 0 the real part of the integral diverges
    logarithmically in the cutoff-free model; the value returned there uses
    a fixed cutoff of 50*gamma for the real part, and the imaginary part is
    the t -> 0+ limit -q*gamma (the sine integral itself vanishes at t = 0).
    """
    if t < 0:
        raise ValueError("correlation function defined for t >= 0")

    def re_integrand(w: float) -> float:
        if w == 0.0:
            # J(w) coth(beta w/2) -> 4qT/gamma as w -> 0
            return 4.0 * bath.q * bath.temperature / (np.pi * bath.gamma)
        return spectral_density(bath, w) * _coth_halfbeta(bath, w) / np.pi

    def im_integrand(w: float) -> float:
        return spectral_density(bath, w) / np.pi

    cutoff = 50.0 * bath.gamma
    if t == 0.0:
        re, re_err = quad(re_integrand, 0.0, cutoff, limit=400, epsabs=1e-10)
        if re_err > 1e-6 * max(abs(re), 1.0):
            raise RuntimeError(f"quadrature did not converge at t=0 (err={re_err:.2e})")
        return complex(re, -bath.q * bath.gamma)

    if t * cutoff < 10.0:
        # Few oscillations over the support: the cycle-based weighted rule is
        # unreliable here, so integrate the explicit product over (0, cutoff]
        # and add the analytic 2 q gamma / w high-frequency tail.
        re, re_err = quad(lambda w: re_integrand(w) * np.cos(w * t),
                          0.0, cutoff, limit=400, epsabs=quad_tol)
        im, im_err = quad(lambda w: im_integrand(w) * np.sin(w * t),
                          0.0, cutoff, limit=400, epsabs=quad_tol)
        si, ci = sici(cutoff * t)
        pref = 2.0 * bath.q * bath.gamma / np.pi
        re -= pref * ci
        im += pref * (0.5 * np.pi - si)
    else:
        re, re_err = quad(
            re_integrand, 0.0, np.inf, weight="cos", wvar=t, limit=400, epsabs=quad_tol
        )
        im, im_err = quad(
            im_integrand, 0.0, np.inf, weight="sin", wvar=t, limit=400, epsabs=quad_tol
        )
    if max(re_err, im_err) > 1e-6 * max(abs(re), abs(im), 1.0):
        raise RuntimeError(
            f"quadrature did not converge at t={t} (errors {re_err:.2e}, {im_err:.2e})"
        )
    return complex(re, -im)


def matsubara_expansion(bath: BathModel) -> list[ExpansionTerm]:
    """Exponential expansion terms (c_k, nu_k), k = 0 ... M.

    c_0 = q gamma (cot(beta gamma / 2) - i), nu_0 = gamma;
    c_k = 4 q gamma T nu_k / (nu_k^2 - gamma^2), nu_k = 2 pi k T.
    """
    x = 0.5 * bath.beta * bath.gamma
    terms = [ExpansionTerm(bath.q * bath.gamma * complex(1.0 / np.tan(x), -1.0), bath.gamma)]
    for k in range(1, bath.n_matsubara + 1):
        nu_k = 2.0 * np.pi * k * bath.temperature
        if abs(nu_k - bath.gamma) < POLE_RTOL * bath.gamma:
            raise ValueError(
                f"Matsubara frequency nu_{k} collides with gamma={bath.gamma}; "
                "perturb T or gamma to lift the degenerate expansion"
            )
        c_k = 4.0 * bath.q * bath.gamma * bath.temperature * nu_k / (nu_k**2 - bath.gamma**2)
        terms.append(ExpansionTerm(complex(c_k), nu_k))
    return terms


def expansion_arrays(bath: BathModel) -> tuple[np.ndarray, np.ndarray]:
    """(c, nu) as arrays — the solver-facing view of matsubara_expansion."""
    terms = matsubara_expansion(bath)
    return (
        np.array([t.coefficient for t in terms]),
        np.array([t.rate for t in terms]),
    )


def reconstruct(bath: BathModel, t: float | np.ndarray):
    """Evaluate the truncated expansion sum_k c_k exp(-nu_k t)."""
    c, nu = expansion_arrays(bath)
    t = np.asarray(t, dtype=float)
    out = np.sum(c * np.exp(-np.multiply.outer(t, nu)), axis=-1)
    return out if out.ndim else complex(out)


def terminator_residual(bath: BathModel) -> float:
    """Markovian closure coefficient Delta_M = sum_{k>M} c_k / nu_k.

    Evaluated through the exact total 2qT/gamma - Re(c_0)/gamma - sum_{k<=M},
    which equals the tail of the Matsubara series.  The tail is positive once
    nu_M exceeds gamma (always true on the study grids); a materially negative
    value means M was truncated inside the nu_k < gamma region and the closure
    would be inconsistent, so that is rejected.
    """
    c, nu = expansion_arrays(bath)
    delta = 2.0 * bath.q * bath.temperature / bath.gamma - c[0].real / nu[0]
    delta -= float(np.sum((c[1:] / nu[1:]).real))
    if delta < -1e-12:
        raise ValueError(f"negative terminator residual {delta:.3e}: expansion inconsistent")
    return float(delta)


def expansion_table(bath: BathModel) -> np.ndarray:
    """Debug dump: one row (k, Re c, Im c, nu) per expansion term."""
    c, nu = expansion_arrays(bath)
    return np.column_stack([np.arange(len(c)), c.real, c.imag, nu])
