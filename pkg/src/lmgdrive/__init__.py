"""Finite-time driving of a dissipative collective-spin qubit register.

An all-to-all coupled register of N qubits lives in its symmetric (N+1)-level
subspace.  Driving the two control fields across the precursors of its first-
and second-order ground-state transitions, while the register talks to an
Ohmic bath through a collective spin operator, is simulated two ways: a
hierarchical-equations solver (numerically exact) and a time-dependent
Lindblad generator in the instantaneous eigenbasis.  Sweep utilities score
final-state fidelities over temperature/duration grids and fit their
size-scaling laws.
"""

from .bath import BathModel, correlation_function, matsubara_expansion, spectral_density, terminator_residual
from .driving import (
    DrivePath,
    DriveSchedule,
    MetricTensor,
    build_schedule,
    first_order_path,
    geometric_length,
    metric_tensor,
    path_by_label,
    second_order_path,
)
from .experiments import (
    RunSpec,
    SweepConfig,
    SweepRecord,
    compare_solvers,
    find_optimal_temperature,
    fit_scaling,
    run_sweep,
    run_trajectory,
)
from .heom import SolverConfig, Trajectory, build_hierarchy, evolve
from .lindblad import jump_operators, lindblad_evolve
from .observables import (
    adiabatic_timescale,
    fidelity_f1,
    fidelity_f2,
    occupations,
    purity,
    trajectory_occupations,
    trajectory_table,
)
from .spin_model import (
    ControlPoint,
    SpinSystem,
    Spectrum,
    build_coupling_operator,
    build_hamiltonian,
    build_spin_operators,
    critical_lambda,
    eigendecompose,
    parity_operator,
    spectrum_scan,
    thermal_state,
)
from .unitary import propagator, unitary_evolve

__version__ = "0.1.0"

__all__ = [
    "BathModel", "correlation_function", "matsubara_expansion", "spectral_density",
    "terminator_residual",
    "DrivePath", "DriveSchedule", "MetricTensor", "build_schedule",
    "first_order_path", "second_order_path", "path_by_label", "metric_tensor",
    "geometric_length",
    "RunSpec", "SweepConfig", "SweepRecord", "run_sweep", "run_trajectory",
    "find_optimal_temperature", "fit_scaling", "compare_solvers",
    "SolverConfig", "Trajectory", "build_hierarchy", "evolve",
    "jump_operators", "lindblad_evolve",
    "adiabatic_timescale", "fidelity_f1", "fidelity_f2", "occupations", "purity",
    "trajectory_occupations", "trajectory_table",
    "ControlPoint", "SpinSystem", "Spectrum", "build_spin_operators",
    "build_hamiltonian", "build_coupling_operator", "parity_operator",
    "critical_lambda", "eigendecompose", "thermal_state", "spectrum_scan",
    "propagator", "unitary_evolve",
    "__version__",
]
