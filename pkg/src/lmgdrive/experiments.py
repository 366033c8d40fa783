"""Declarative sweeps over drive/bath grids, with fits and solver comparison.

A sweep is a cross product of system sizes, temperatures, drive durations and
coupling settings.  Each grid point is one finite-time drive: prepare the
thermal state of H(Lambda_I), integrate with the selected solver, score the
final state against the target spectrum at Lambda_F.  Records are persisted
incrementally (CSV + JSON metadata, atomic renames) and reruns skip points
that are already on disk, so long sweeps can be resumed.

Single trajectories can also be cached to disk keyed by a hash of the full
run specification; the expensive low-temperature hierarchy runs are executed
once and reloaded afterwards.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bath import BathModel
from .driving import build_schedule, path_by_label
from .heom import SolverConfig, Trajectory, evolve, hamiltonian_of_time
from .lindblad import lindblad_evolve
from .observables import fidelity_f1, fidelity_f2
from .spin_model import build_hamiltonian, build_spin_operators, eigendecompose, thermal_state
from .unitary import default_step_count, propagator, unitary_evolve

__all__ = [
    "SweepConfig",
    "SweepRecord",
    "RunSpec",
    "TemperatureOptimum",
    "FitResult",
    "default_temperature_grid",
    "default_tf_grid",
    "matsubara_count",
    "run_trajectory",
    "run_sweep",
    "load_records",
    "find_optimal_temperature",
    "fit_scaling",
    "compare_solvers",
    "SWEEP_COLUMNS",
]

SWEEP_COLUMNS = [
    "path", "protocol", "solver", "N", "T", "tF", "q", "theta", "r",
    "M", "L", "fidelity", "trace_drift", "wall_seconds",
]

_SOLVERS = ("heom", "lindblad", "unitary")


def default_temperature_grid(n_points: int = 12) -> list[float]:
    """Log-spaced temperatures over log10 T in [-0.8, 1.4]."""
    return [float(t) for t in 10.0 ** np.linspace(-0.8, 1.4, n_points)]


def default_tf_grid(path: str) -> list[float]:
    """Drive durations: 10^{0.4..3.6} (first order), 10^{0..1.6} (second order)."""
    if path == "first_order":
        exponents = 0.4 * np.arange(1, 10)
    elif path == "second_order":
        exponents = 0.4 * np.arange(0, 5)
    else:
        raise ValueError(f"no default duration grid for path {path!r}")
    return [float(t) for t in 10.0 ** exponents]


def matsubara_count(temperature: float, override: int | None = None) -> int:
    """Expansion-size rule: M = 18 below T = 1, M = 5 at or above."""
    if override is not None:
        return int(override)
    return 18 if temperature < 1.0 else 5


@dataclass
class SweepConfig:
    """Grid description for one sweep.  Field names double as config-file keys."""

    path: str = "first_order"
    protocol: str = "A"
    solver: str = "heom"
    N: list[int] = field(default_factory=lambda: [10])
    T_grid: list[float] | None = None
    tF_grid: list[float] | None = None
    q: list[float] = field(default_factory=lambda: [0.1])
    theta: list[float] = field(default_factory=lambda: [0.0])
    r: list[int] = field(default_factory=lambda: [0])
    gamma: float = 10.0
    M: int | None = None
    L: int = 3
    output_dir: str = "sweep_out"
    fidelity_kind: str | None = None  # default: F1 on first_order, F2 on second_order
    integrator: str = "rk"
    fixed_step: float = 0.02
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    n_outputs: int = 41
    force_heom: bool = False
    max_workers: int = 1

    def __post_init__(self) -> None:
        path_by_label(self.path)  # raises on unknown label
        if self.protocol not in ("A", "B"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.solver not in _SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.fidelity_kind not in (None, "F1", "F2"):
            raise ValueError(f"fidelity_kind must be F1 or F2, got {self.fidelity_kind!r}")
        if self.T_grid is None:
            self.T_grid = default_temperature_grid()
        if self.tF_grid is None:
            self.tF_grid = default_tf_grid(self.path)
        for name, grid in (("N", self.N), ("T_grid", self.T_grid),
                           ("tF_grid", self.tF_grid), ("q", self.q),
                           ("theta", self.theta), ("r", self.r)):
            if not list(grid):
                raise ValueError(f"grid {name} is empty")
        if any(int(n) < 2 for n in self.N):
            raise ValueError("system sizes must be at least 2")
        if any(t <= 0 for t in self.T_grid) or any(t <= 0 for t in self.tF_grid):
            raise ValueError("temperatures and durations must be positive")
        if any(qv < 0 for qv in self.q):
            raise ValueError("couplings must be nonnegative")
        if any(rv not in (0, 1) for rv in self.r):
            raise ValueError("r must be 0 or 1")
        for rv in self.r:
            if rv == 1 and any(qv == 0 for qv in self.q):
                raise ValueError("r=1 requires q > 0 (counterterm without coupling)")
            if rv == 1 and any(th == 0 for th in self.theta):
                raise ValueError("theta=0 drives use r=0 only")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.L < 1:
            raise ValueError("hierarchy depth must be at least 1")
        if self.n_outputs < 2:
            raise ValueError("n_outputs must be at least 2")
        if self.max_workers < 1:
            raise ValueError("max_workers must be at least 1")

    @property
    def resolved_fidelity_kind(self) -> str:
        if self.fidelity_kind is not None:
            return self.fidelity_kind
        return "F1" if self.path == "first_order" else "F2"


@dataclass(frozen=True)
class RunSpec:
    """Complete description of one trajectory run (also the cache key)."""

    path: str
    protocol: str
    solver: str
    n: int
    temperature: float
    t_final: float
    q: float = 0.0
    theta: float = 0.0
    r: int = 0
    gamma: float = 10.0
    matsubara: int = 5
    depth: int = 3
    integrator: str = "rk"
    fixed_step: float = 0.02
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    n_outputs: int = 121

    def coordinates(self) -> tuple:
        return (self.path, self.protocol, self.solver, self.n, self.temperature,
                self.t_final, self.q, self.theta, self.r, self.matsubara, self.depth)

    def cache_key(self) -> str:
        payload = {k: (repr(v) if isinstance(v, float) else v)
                   for k, v in asdict(self).items()}
        digest = hashlib.sha1(json.dumps(payload, sort_keys=True).encode())
        return digest.hexdigest()[:20]


@dataclass(frozen=True)
class SweepRecord:
    """One scored grid point; immutable once written."""

    path: str
    protocol: str
    solver: str
    n: int
    temperature: float
    t_final: float
    q: float
    theta: float
    r: int
    matsubara: int
    depth: int
    fidelity: float
    trace_drift: float
    wall_seconds: float

    def coordinates(self) -> tuple:
        return (self.path, self.protocol, self.solver, self.n, self.temperature,
                self.t_final, self.q, self.theta, self.r, self.matsubara, self.depth)

    def key(self) -> str:
        names = ("path", "protocol", "solver", "n", "temperature", "t_final",
                 "q", "theta", "r", "matsubara", "depth")
        payload = {k: (repr(v) if isinstance(v, float) else v)
                   for k, v in zip(names, self.coordinates())}
        digest = hashlib.sha1(json.dumps(payload, sort_keys=True).encode())
        return digest.hexdigest()[:20]


def _initial_state(sys, path, spec: RunSpec) -> np.ndarray:
    h0 = build_hamiltonian(sys, path.start, renorm=spec.r, q=spec.q, theta=spec.theta)
    return thermal_state(eigendecompose(h0), 1.0 / spec.temperature)


def _target_spectrum(sys, path, spec: RunSpec):
    h_f = build_hamiltonian(sys, path.end, renorm=spec.r, q=spec.q, theta=spec.theta)
    return eigendecompose(h_f)


def run_trajectory(spec: RunSpec, cache_dir: str | Path | None = None) -> Trajectory:
    """Execute (or reload) the trajectory described by a RunSpec."""
    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"{spec.cache_key()}.npz"
        if cache_file.exists():
            data = np.load(cache_file)
            return Trajectory(
                times=data["times"],
                states=data["states"],
                trace_drift=float(data["trace_drift"]),
                solver=str(data["solver"]),
                n_rhs_evals=int(data["n_rhs_evals"]),
            )

    sys = build_spin_operators(spec.n)
    path = path_by_label(spec.path)
    schedule = build_schedule(sys, path, spec.protocol, spec.t_final)
    rho0 = _initial_state(sys, path, spec)
    output_times = np.linspace(0.0, spec.t_final, spec.n_outputs)

    if spec.solver == "unitary":
        h_at = hamiltonian_of_time(sys, schedule, renorm=spec.r, q=spec.q, theta=spec.theta)
        n_steps = default_step_count(schedule)
        states = unitary_evolve(rho0, h_at, spec.t_final, output_times, n_steps=n_steps)
        traces = np.einsum("tii->t", states).real
        traj = Trajectory(
            times=output_times,
            states=states,
            trace_drift=float(np.abs(traces - 1.0).max()),
            solver="unitary",
            n_rhs_evals=n_steps,
        )
    else:
        bath = BathModel(spec.q, spec.gamma, spec.temperature, spec.matsubara)
        config = SolverConfig(
            depth=spec.depth,
            integrator=spec.integrator,
            rel_tol=spec.rel_tol,
            abs_tol=spec.abs_tol,
            fixed_step=spec.fixed_step,
            n_outputs=spec.n_outputs,
        )
        solve = evolve if spec.solver == "heom" else lindblad_evolve
        traj = solve(rho0, sys, schedule, bath, config, theta=spec.theta,
                     renorm=spec.r, output_times=output_times)

    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        tmp = cache_file.with_suffix(".tmp.npz")
        np.savez_compressed(
            tmp, times=traj.times, states=traj.states,
            trace_drift=traj.trace_drift, solver=traj.solver,
            n_rhs_evals=traj.n_rhs_evals,
        )
        os.replace(tmp, cache_file)
    return traj


def _score(spec: RunSpec, rho_final: np.ndarray, kind: str) -> float:
    sys = build_spin_operators(spec.n)
    path = path_by_label(spec.path)
    target = _target_spectrum(sys, path, spec)
    score = fidelity_f1 if kind == "F1" else fidelity_f2
    return score(rho_final, target, target=path.end).value


def grid_points(config: SweepConfig) -> list[RunSpec]:
    """Expand the cross-product grid into RunSpecs, q=0 routed to the unitary solver."""
    specs = []
    for n in config.N:
        for t_final in config.tF_grid:
            for temperature in config.T_grid:
                for qv in config.q:
                    for theta in config.theta:
                        for rv in config.r:
                            solver = config.solver
                            if qv == 0 and not config.force_heom:
                                solver = "unitary"
                            specs.append(RunSpec(
                                path=config.path,
                                protocol=config.protocol,
                                solver=solver,
                                n=int(n),
                                temperature=float(temperature),
                                t_final=float(t_final),
                                q=float(qv),
                                theta=float(theta),
                                r=int(rv),
                                gamma=float(config.gamma),
                                matsubara=matsubara_count(temperature, config.M),
                                depth=int(config.L),
                                integrator=config.integrator,
                                fixed_step=config.fixed_step,
                                rel_tol=config.rel_tol,
                                abs_tol=config.abs_tol,
                                n_outputs=config.n_outputs,
                            ))
    return specs


def _spec_key(spec: RunSpec) -> str:
    names = ("path", "protocol", "solver", "n", "temperature", "t_final",
             "q", "theta", "r", "matsubara", "depth")
    payload = {k: (repr(v) if isinstance(v, float) else v)
               for k, v in zip(names, spec.coordinates())}
    return hashlib.sha1(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:20]


def _run_point(config: SweepConfig, spec: RunSpec, shared: dict,
               cache_dir: str | Path | None) -> SweepRecord:
    kind = config.resolved_fidelity_kind
    start = time.perf_counter()
    if spec.solver == "unitary":
        # One propagator serves every temperature at fixed (path, protocol, N, tF):
        # q = 0 makes the Hamiltonian independent of the bath coordinates.
        key = (spec.path, spec.protocol, spec.n, spec.t_final)
        with shared["lock"]:
            entry = shared["propagators"].get(key)
        if entry is None:
            sys = build_spin_operators(spec.n)
            path = path_by_label(spec.path)
            schedule = build_schedule(sys, path, spec.protocol, spec.t_final)
            h_at = hamiltonian_of_time(sys, schedule, renorm=spec.r, q=spec.q,
                                       theta=spec.theta)
            entry = propagator(h_at, spec.t_final, default_step_count(schedule))
            with shared["lock"]:
                shared["propagators"][key] = entry
        sys = build_spin_operators(spec.n)
        path = path_by_label(spec.path)
        rho0 = _initial_state(sys, path, spec)
        rho_final = entry @ rho0 @ entry.conj().T
        drift = float(abs(np.trace(rho_final).real - 1.0))
    else:
        traj = run_trajectory(spec, cache_dir=cache_dir)
        rho_final = traj.final_state()
        drift = traj.trace_drift
    fidelity = _score(spec, rho_final, kind)
    wall = time.perf_counter() - start
    return SweepRecord(*spec.coordinates(), fidelity=fidelity,
                       trace_drift=drift, wall_seconds=wall)


def _record_row(rec: SweepRecord) -> list[str]:
    return [
        rec.path, rec.protocol, rec.solver, str(rec.n),
        f"{rec.temperature:.17g}", f"{rec.t_final:.17g}", f"{rec.q:.17g}",
        f"{rec.theta:.17g}", str(rec.r), str(rec.matsubara), str(rec.depth),
        f"{rec.fidelity:.12g}", f"{rec.trace_drift:.6g}", f"{rec.wall_seconds:.4g}",
    ]


def load_records(csv_path: str | Path) -> list[SweepRecord]:
    """Read a sweep CSV back into records; duplicate coordinates are an error."""
    records = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(SweepRecord(
                path=row["path"], protocol=row["protocol"], solver=row["solver"],
                n=int(row["N"]), temperature=float(row["T"]), t_final=float(row["tF"]),
                q=float(row["q"]), theta=float(row["theta"]), r=int(row["r"]),
                matsubara=int(row["M"]), depth=int(row["L"]),
                fidelity=float(row["fidelity"]), trace_drift=float(row["trace_drift"]),
                wall_seconds=float(row["wall_seconds"]),
            ))
    keys = [r.key() for r in records]
    if len(set(keys)) != len(keys):
        raise ValueError(f"duplicate grid coordinates in {csv_path}")
    return records


def _flush(records: list[SweepRecord], errors: dict, config: SweepConfig,
           csv_path: Path, meta_path: Path) -> None:
    ordered = sorted(records, key=lambda r: r.coordinates())
    tmp = csv_path.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for rec in ordered:
            writer.writerow(_record_row(rec))
    os.replace(tmp, csv_path)
    meta = {
        "config": asdict(config),
        "fidelity_kind": config.resolved_fidelity_kind,
        "columns": SWEEP_COLUMNS,
        "errors": errors,
    }
    tmp = meta_path.with_suffix(".json.tmp")
    with open(tmp, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    os.replace(tmp, meta_path)


def run_sweep(config: SweepConfig, cache_dir: str | Path | None = None,
              verbose: bool = False) -> list[SweepRecord]:
    """Evaluate every grid point, skipping those already recorded on disk.

    Grid points run as independent jobs on a bounded thread pool; the output
    CSV is rewritten atomically after each completion, always sorted by
    coordinate order, so the on-disk result is independent of scheduling.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep.csv"
    meta_path = out_dir / "sweep_meta.json"

    records = load_records(csv_path) if csv_path.exists() else []
    errors: dict[str, str] = {}
    if meta_path.exists():
        with open(meta_path) as fh:
            errors = json.load(fh).get("errors", {})

    done = {r.key() for r in records}
    todo = [s for s in grid_points(config) if _spec_key(s) not in done]
    if not todo:
        return sorted(records, key=lambda r: r.coordinates())

    shared = {"lock": threading.Lock(), "propagators": {}}
    flush_lock = threading.Lock()

    def job(spec: RunSpec) -> None:
        try:
            rec = _run_point(config, spec, shared, cache_dir)
            err = None
        except Exception as exc:  # record the failure, keep sweeping
            rec = SweepRecord(*spec.coordinates(), fidelity=float("nan"),
                              trace_drift=float("nan"), wall_seconds=0.0)
            err = f"{type(exc).__name__}: {exc}"
        with flush_lock:
            records.append(rec)
            if err is not None:
                errors[rec.key()] = err
            _flush(records, errors, config, csv_path, meta_path)
            if verbose:
                print(f"[{len(records)}] {rec.solver} N={rec.n} T={rec.temperature:.4g} "
                      f"tF={rec.t_final:.4g} q={rec.q} -> F={rec.fidelity:.4f}")

    with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
        list(pool.map(job, todo))
    return sorted(records, key=lambda r: r.coordinates())


@dataclass(frozen=True)
class TemperatureOptimum:
    """Interior maximum of fidelity over temperature, or a boundary flag."""

    t_opt: float | None
    max_fidelity: float
    boundary: bool


def find_optimal_temperature(records: list[SweepRecord]) -> TemperatureOptimum:
    """Locate the fidelity maximum over T for one fixed (N, t_F, q, theta, r).

    The discrete argmax is refined by quadratic interpolation through its
    neighbors in log10 T.  An argmax at either end of the grid returns
    boundary=True with no interpolated optimum (monotone curve).
    """
    coords = {(r.path, r.protocol, r.n, r.t_final, r.q, r.theta, r.r) for r in records}
    if len(coords) > 1:
        raise ValueError("records mix several grid curves; filter to one (N, tF, q, theta, r)")
    points = sorted((r.temperature, r.fidelity) for r in records
                    if np.isfinite(r.fidelity))
    if len(points) < 5:
        raise ValueError(f"need at least 5 temperature points, got {len(points)}")
    temps = np.array([p[0] for p in points])
    fids = np.array([p[1] for p in points])
    k = int(np.argmax(fids))
    if k in (0, len(fids) - 1):
        return TemperatureOptimum(t_opt=None, max_fidelity=float(fids[k]), boundary=True)
    x = np.log10(temps[k - 1:k + 2])
    y = fids[k - 1:k + 2]
    a, b, c = np.polyfit(x, y, 2)
    if a >= 0:  # no downward curvature; keep the discrete point
        return TemperatureOptimum(float(temps[k]), float(fids[k]), boundary=False)
    x_star = -b / (2.0 * a)
    return TemperatureOptimum(
        t_opt=float(10.0**x_star),
        max_fidelity=float(c - b * b / (4.0 * a)),
        boundary=False,
    )


@dataclass(frozen=True)
class FitResult:
    model: str
    coefficients: tuple[float, ...]
    residuals: np.ndarray
    rms: float


def fit_scaling(sizes, values, model: str) -> FitResult:
    """Least-squares fit of size-scaling data.

    models: "linear" (y = a N), "power" (y = b N^-kappa, fitted log-log),
    "quadratic_inverse" (y = b/N - c/N^2).
    """
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    if sizes.shape != values.shape or sizes.ndim != 1:
        raise ValueError("sizes and values must be matching 1-d arrays")
    if len(sizes) < 3:
        raise ValueError("need at least 3 sizes to fit a scaling law")
    if len(np.unique(sizes)) < 2:
        raise ValueError("rank-deficient fit: all sizes identical")

    if model == "linear":
        a = float(np.dot(sizes, values) / np.dot(sizes, sizes))
        predicted = a * sizes
        coeffs = (a,)
    elif model == "power":
        if np.any(values <= 0):
            raise ValueError("power fit requires positive values")
        slope, intercept = np.polyfit(np.log(sizes), np.log(values), 1)
        b, kappa = float(np.exp(intercept)), float(-slope)
        predicted = b * sizes**(-kappa)
        coeffs = (b, kappa)
    elif model == "quadratic_inverse":
        design = np.column_stack([1.0 / sizes, 1.0 / sizes**2])
        beta, *_ = np.linalg.lstsq(design, values, rcond=None)
        b, c = float(beta[0]), float(-beta[1])
        predicted = b / sizes - c / sizes**2
        coeffs = (b, c)
    else:
        raise ValueError(f"unknown scaling model {model!r}")

    residuals = values - predicted
    return FitResult(model=model, coefficients=coeffs, residuals=residuals,
                     rms=float(np.sqrt(np.mean(residuals**2))))


COMPARE_COLUMNS = ["T", "F_heom", "F_lindblad", "abs_diff", "below_gamma_over_2pi"]


def compare_solvers(config: SweepConfig, cache_dir: str | Path | None = None
                    ) -> tuple[list[str], np.ndarray]:
    """Per-temperature |F_heom - F_lindblad| for one curve of the grid.

    The last column marks temperatures at or below gamma/2pi, where the
    Markovian generator loses accuracy and the two solvers may part ways.
    """
    if (len(config.N), len(config.tF_grid), len(config.q),
            len(config.theta), len(config.r)) != (1, 1, 1, 1, 1):
        raise ValueError("solver comparison wants a single (N, tF, q, theta, r) curve")
    if config.q[0] <= 0:
        raise ValueError("solver comparison needs q > 0 (both reduce to unitary at q=0)")
    kind = config.resolved_fidelity_kind
    threshold = config.gamma / (2.0 * np.pi)
    rows = np.zeros((len(config.T_grid), 5))
    for i, temperature in enumerate(sorted(config.T_grid)):
        fids = {}
        for solver in ("heom", "lindblad"):
            spec = RunSpec(
                path=config.path, protocol=config.protocol, solver=solver,
                n=int(config.N[0]), temperature=float(temperature),
                t_final=float(config.tF_grid[0]), q=float(config.q[0]),
                theta=float(config.theta[0]), r=int(config.r[0]),
                gamma=config.gamma, matsubara=matsubara_count(temperature, config.M),
                depth=config.L, integrator=config.integrator,
                fixed_step=config.fixed_step, rel_tol=config.rel_tol,
                abs_tol=config.abs_tol, n_outputs=config.n_outputs,
            )
            try:
                traj = run_trajectory(spec, cache_dir=cache_dir)
                fids[solver] = _score(spec, traj.final_state(), kind)
            except Exception:
                fids[solver] = float("nan")
        rows[i] = [temperature, fids["heom"], fids["lindblad"],
                   abs(fids["heom"] - fids["lindblad"]), float(temperature <= threshold)]
    return COMPARE_COLUMNS, rows
