"""Command-line front end: spectrum scans, single drives, sweeps, fits, comparisons.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 resource cap.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys as _sys
from pathlib import Path

import numpy as np

from .driving import build_schedule, path_by_label, schedule_table
from .experiments import (
    RunSpec,
    SweepConfig,
    _target_spectrum,
    compare_solvers,
    find_optimal_temperature,
    fit_scaling,
    load_records,
    matsubara_count,
    run_sweep,
    run_trajectory,
)
from .observables import fidelity_f1, fidelity_f2, trajectory_table
from .spin_model import build_spin_operators, scan_header, spectrum_scan

_LIST_FIELDS = {"N": int, "T_grid": float, "tF_grid": float, "q": float,
                "theta": float, "r": int}
_SCALAR_FIELDS = {"path": str, "protocol": str, "solver": str, "gamma": float,
                  "M": int, "L": int, "output_dir": str, "fidelity_kind": str,
                  "integrator": str, "fixed_step": float, "rel_tol": float,
                  "abs_tol": float, "n_outputs": int, "force_heom": bool,
                  "max_workers": int}

_ANGLES = {"pi": np.pi, "pi/2": np.pi / 2, "pi/4": np.pi / 4}


def _parse_scalar(token: str, kind):
    token = token.strip()
    if kind is bool:
        if token.lower() in ("true", "yes", "1"):
            return True
        if token.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {token!r}")
    if kind is float and token in _ANGLES:
        return _ANGLES[token]
    return kind(token)


def parse_config_file(path: str | Path) -> SweepConfig:
    """Read a flat key = value sweep description.

    Lists are comma separated; '#' starts a comment; unknown keys are errors.
    """
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value

    known = {f.name for f in dataclasses.fields(SweepConfig)}
    unknown = sorted(set(pairs) - known)
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {', '.join(unknown)}")

    kwargs: dict = {}
    for key, value in pairs.items():
        if key in _LIST_FIELDS:
            kind = _LIST_FIELDS[key]
            kwargs[key] = [_parse_scalar(tok, kind) for tok in value.split(",") if tok.strip()]
        else:
            kwargs[key] = _parse_scalar(value, _SCALAR_FIELDS[key])
    return SweepConfig(**kwargs)


def _write_table(out: str, header: list[str], rows: np.ndarray) -> None:
    target = _sys.stdout if out == "-" else open(out, "w", newline="")
    try:
        writer = csv.writer(target)
        writer.writerow(header)
        for row in np.atleast_2d(rows):
            writer.writerow([f"{v:.12g}" for v in row])
    finally:
        if target is not _sys.stdout:
            target.close()


def _cmd_spectrum(args) -> int:
    sys = build_spin_operators(args.N)
    path = path_by_label(args.path)
    _, table = spectrum_scan(sys, path.start, path.end, n_points=args.points,
                             with_parity=args.parity)
    _write_table(args.out, scan_header(sys, with_parity=args.parity), table)
    return 0


def _cmd_drive(args) -> int:
    spec = RunSpec(
        path=args.path, protocol=args.protocol, solver=args.solver, n=args.N,
        temperature=args.T, t_final=args.tF, q=args.q, theta=args.theta,
        r=args.r, gamma=args.gamma,
        matsubara=matsubara_count(args.T, args.M), depth=args.L,
        integrator=args.integrator, fixed_step=args.fixed_step,
        n_outputs=args.n_outputs,
    )
    sys = build_spin_operators(spec.n)
    path = path_by_label(spec.path)
    schedule = build_schedule(sys, path, spec.protocol, spec.t_final)
    if args.schedule_out:
        _write_table(args.schedule_out, ["t", "s", "lambda", "chi", "u", "v"],
                     schedule_table(schedule))
    traj = run_trajectory(spec, cache_dir=args.cache_dir)
    header, rows = trajectory_table(traj, sys, schedule, renorm=spec.r,
                                    q=spec.q, theta=spec.theta)
    _write_table(args.out, header, rows)
    target = _target_spectrum(sys, path, spec)
    f1 = fidelity_f1(traj.final_state(), target, target=path.end).value
    f2 = fidelity_f2(traj.final_state(), target, target=path.end).value
    print(f"F1 = {f1:.6f}  F2 = {f2:.6f}  trace_drift = {traj.trace_drift:.3e}",
          file=_sys.stderr)
    return 0


def _cmd_sweep(args) -> int:
    config = parse_config_file(args.config)
    records = run_sweep(config, cache_dir=args.cache_dir, verbose=args.verbose)
    print(f"{len(records)} records in {config.output_dir}/sweep.csv", file=_sys.stderr)
    return 0


def _cmd_fit(args) -> int:
    records = [r for r in load_records(args.records) if np.isfinite(r.fidelity)]
    curves = {(r.path, r.protocol, r.solver, r.t_final, r.q, r.theta, r.r)
              for r in records}
    if len(curves) != 1:
        raise ValueError("records span several (tF, q, theta, r) curves; "
                         "fit expects one curve over sizes and temperatures")
    sizes, t_opts, max_fs = [], [], []
    for n in sorted({r.n for r in records}):
        opt = find_optimal_temperature([r for r in records if r.n == n])
        if opt.boundary:
            print(f"N={n}: fidelity maximum at grid boundary, skipped", file=_sys.stderr)
            continue
        sizes.append(n)
        t_opts.append(opt.t_opt)
        max_fs.append(opt.max_fidelity)
    values = t_opts if args.quantity == "t_opt" else max_fs
    result = fit_scaling(sizes, values, args.model)
    payload = {
        "model": result.model,
        "quantity": args.quantity,
        "coefficients": list(result.coefficients),
        "rms": result.rms,
        "sizes": sizes,
        "values": values,
    }
    text = json.dumps(payload, indent=2)
    if args.out == "-":
        print(text)
    else:
        Path(args.out).write_text(text + "\n")
    return 0


def _cmd_compare(args) -> int:
    config = parse_config_file(args.config)
    header, rows = compare_solvers(config, cache_dir=args.cache_dir)
    _write_table(args.out, header, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmgdrive",
        description="Finite-time drives of a dissipative collective-spin model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="tabulate the spectrum along a drive path")
    p.add_argument("--path", default="first_order",
                   choices=["first_order", "second_order"])
    p.add_argument("-N", type=int, default=10, help="number of qubits")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--parity", action="store_true",
                   help="append parity labels (chi = 0 scans)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("drive", help="run one finite-time drive, emit trajectory CSV")
    p.add_argument("--path", default="first_order",
                   choices=["first_order", "second_order"])
    p.add_argument("--protocol", default="A", choices=["A", "B"])
    p.add_argument("--solver", default="heom", choices=["heom", "lindblad", "unitary"])
    p.add_argument("-N", type=int, default=10)
    p.add_argument("-T", type=float, required=True, help="bath temperature")
    p.add_argument("--tF", type=float, required=True, help="drive duration")
    p.add_argument("-q", type=float, default=0.1, help="coupling strength")
    p.add_argument("--theta", type=float, default=0.0, help="coupling angle (rad)")
    p.add_argument("-r", type=int, default=0, choices=[0, 1],
                   help="include the coupling counterterm")
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("-M", type=int, default=None,
                   help="Matsubara terms (default: 18 below T=1, else 5)")
    p.add_argument("-L", type=int, default=3, help="hierarchy depth")
    p.add_argument("--integrator", default="rk", choices=["rk", "rk4", "etd"])
    p.add_argument("--fixed-step", type=float, default=0.02)
    p.add_argument("--n-outputs", type=int, default=121)
    p.add_argument("--out", default="-")
    p.add_argument("--schedule-out", default=None,
                   help="also write the schedule table (t, s, lambda, chi, u, v)")
    p.add_argument("--cache-dir", default=None)
    p.set_defaults(func=_cmd_drive)

    p = sub.add_parser("sweep", help="run a sweep described by a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="fit T_opt / max-F scaling laws to sweep records")
    p.add_argument("--records", required=True, help="sweep CSV")
    p.add_argument("--model", required=True,
                   choices=["linear", "power", "quadratic_inverse"])
    p.add_argument("--quantity", default="t_opt", choices=["t_opt", "max_f"])
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("compare", help="HEOM vs Lindblad fidelity per temperature")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--cache-dir", default=None)
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    except ResourceWarning as exc:
        print(f"resource cap: {exc}", file=_sys.stderr)
        return 4
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=_sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
