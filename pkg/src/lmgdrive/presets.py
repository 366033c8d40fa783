"""Reference run specifications reused by the example scripts and the test suite.

The hierarchy runs below T = 1 carry 1540 auxiliary operators over thousands
of time units; they are executed once with the exponential integrator and
cached on disk (see run_trajectory's cache_dir).  Keeping their RunSpecs in
one place guarantees every consumer computes the same cache key.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .experiments import RunSpec, default_temperature_grid, matsubara_count

GAMMA = 10.0

#: Temperatures above/below gamma/2pi from the default grid.
MARKOV_THRESHOLD = GAMMA / (2.0 * np.pi)


def default_cache_dir() -> Path:
    return Path(os.environ.get("LMGDRIVE_CACHE", "results/trajectories"))


def high_temperature_runs() -> list[RunSpec]:
    """Drives at T = 10^1.4 where every level ends close to equally occupied.

    Short duration on purpose: slow drives at this temperature pick up the
    Boltzmann tilt of the final spectrum, which pushes the two-level fidelity
    away from 2/(N+1) again.
    """
    t_hot = 10.0**1.4
    specs = []
    for protocol in ("A", "B"):
        for q in (0.0, 0.1):
            solver = "unitary" if q == 0.0 else "heom"
            specs.append(RunSpec(path="first_order", protocol=protocol,
                                 solver=solver, n=10, temperature=t_hot,
                                 t_final=10.0**0.4, q=q, theta=0.0, r=0,
                                 gamma=GAMMA, matsubara=5, depth=3))
    return specs


def recovery_runs() -> tuple[RunSpec, RunSpec]:
    """The ground-state-recovery pair: q = 0.1 transverse coupling vs closed system.

    T just below 1 selects the deep 18-term Matsubara expansion; the open run
    is the heaviest preset.
    """
    t_cold = 10.0**-0.04
    t_final = 10.0**2.8
    opened = RunSpec(path="first_order", protocol="A", solver="heom", n=10,
                     temperature=t_cold, t_final=t_final, q=0.1,
                     theta=float(np.pi / 2), r=0, gamma=GAMMA, matsubara=18,
                     depth=3, integrator="etd", fixed_step=0.05)
    closed = RunSpec(path="first_order", protocol="A", solver="unitary", n=10,
                     temperature=t_cold, t_final=t_final, q=0.0, theta=0.0,
                     r=0, gamma=GAMMA, matsubara=18, depth=3)
    return opened, closed


def comparison_temperatures() -> list[float]:
    """Default-grid temperatures above gamma/2pi (the Markovian regime)."""
    return [t for t in default_temperature_grid() if t > MARKOV_THRESHOLD]


def comparison_runs() -> list[RunSpec]:
    """HEOM/Lindblad pairs for the t_F = 10^3.6 cross-validation curve."""
    t_final = 10.0**3.6
    specs = []
    for temperature in comparison_temperatures():
        for solver in ("heom", "lindblad"):
            specs.append(_comparison_spec(solver, 0.1, temperature, t_final))
    for temperature, solver in nonmarkov_pairs():
        specs.append(_comparison_spec(solver, 1.0, temperature, t_final))
    return specs


def nonmarkov_pairs() -> list[tuple[float, str]]:
    """(T, solver) combinations at strong coupling below the Markov threshold."""
    return [(t, solver) for t in (1.0, 10.0**-0.2) for solver in ("heom", "lindblad")]


def _comparison_spec(solver: str, q: float, temperature: float, t_final: float) -> RunSpec:
    matsubara = matsubara_count(temperature)
    if solver == "heom":
        return RunSpec(path="first_order", protocol="A", solver="heom", n=10,
                       temperature=temperature, t_final=t_final, q=q, theta=0.0,
                       r=0, gamma=GAMMA, matsubara=matsubara, depth=3,
                       integrator="etd", fixed_step=0.04)
    return RunSpec(path="first_order", protocol="A", solver="lindblad", n=10,
                   temperature=temperature, t_final=t_final, q=q, theta=0.0,
                   r=0, gamma=GAMMA, matsubara=matsubara, depth=3,
                   integrator="rk", rel_tol=1e-7, abs_tol=1e-9)


def all_heavy_runs() -> list[RunSpec]:
    opened, _ = recovery_runs()
    return high_temperature_runs() + [opened] + comparison_runs()
