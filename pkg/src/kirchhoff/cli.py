"""Command-line front end.

Subcommands: constants, classify, scalar, energy, solve, sweep,
lambda-star, lambda-tilde, curves.  Results are JSON (machine-read),
fields and curve tables are CSV (plot-friendly), problem configuration is
TOML (human-edited).  Exit codes: 0 success, 1 validation error, 2 solver
non-convergence.  Outputs carry no timestamps, so identical inputs and
seeds give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import ConfigError, ProblemConfig, load_config
from .constants import KirchhoffParams, classify, sharp_constants
from .cutoff import (
    CutoffSpec,
    build_cutoff,
    find_sigma0,
    hmax_on_plateau_range,
    lambda_star_estimate,
    lambda_tilde,
    power_source,
)
from .functional import energy
from .radial import h1_norm, read_field_csv, write_field_csv
from .scalar import ScalarProfile, minimizer, positivity_certificate
from .solvers import (
    DivergenceError,
    UnboundedEnergyError,
    fixed_point_solve,
    minimize,
    multistart_search,
)


class _Parser(argparse.ArgumentParser):
    """argparse that exits with code 1 on usage errors (validation errors)."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dump(obj, out_path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    print(text)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")


def _parse_dims(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in spec.split(",") if tok]


def _parse_grid_values(spec: str) -> list[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected start:stop:count (got {spec!r})")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        return [float(x) for x in np.linspace(lo, hi, n)]
    return [float(tok) for tok in spec.split(",") if tok]


def _parse_values_flag(spec, fallback) -> list[float]:
    if spec is None:
        return [fallback]
    return _parse_grid_values(spec)


def emit_curves(dims, a_grid) -> list[dict]:
    """Threshold curves b = X_d a^{-(d-4)/2} for X in {L, PS, C}.

    One row per (d, a); at d = 4 the rows are a-independent horizontal
    lines.
    """
    rows = []
    for d in dims:
        consts = sharp_constants(d)
        for a in a_grid:
            if a <= 0.0:
                raise ValueError(f"a-grid entries must be positive (got {a})")
            fac = a ** (-(d - 4.0) / 2.0)
            rows.append(
                {
                    "d": d,
                    "a": float(a),
                    "b_L": consts.L_d * fac,
                    "b_PS": consts.PS_d * fac,
                    "b_C": consts.C_d * fac,
                }
            )
    return rows


def _cmd_constants(args) -> int:
    consts = sharp_constants(args.dim)
    if args.json:
        _dump({"d": args.dim, **consts.to_dict()})
    else:
        print(f"d      = {args.dim}")
        print(f"omega_d = {consts.omega_d!r}")
        print(f"S_d     = {consts.S_d!r}")
        print(f"L_d     = {consts.L_d!r}")
        print(f"PS_d    = {consts.PS_d!r}")
        print(f"C_d     = {consts.C_d!r}")
    return 0


def _cmd_classify(args) -> int:
    report = classify(args.dim, KirchhoffParams(a=args.a, b=args.b),
                      boundary_tol=args.tol)
    _dump({"d": args.dim, "a": args.a, "b": args.b, **report.to_dict()})
    return 0


def _cmd_scalar(args) -> int:
    profile = ScalarProfile(args.kind, args.dim, KirchhoffParams(a=args.a, b=args.b))
    out = {"kind": profile.kind, "d": args.dim, "a": args.a, "b": args.b}
    if args.eval is not None:
        out["x"] = args.eval
        out["value"] = profile.value(args.eval)
    elif args.min:
        m = minimizer(profile)
        out["minimizer"] = m
        if m is None and args.dim == 4:
            out["d4_leading_coefficient"] = profile.d4_leading_coefficient()
        if m is not None:
            out["minimum"] = profile.value(m)
    else:
        out["certificate"] = positivity_certificate(profile)
    _dump(out)
    return 0


def _cmd_energy(args) -> int:
    cfg = load_config(args.config)
    grid = cfg.build_grid()
    field = read_field_csv(args.field, grid=grid)
    pert = cfg.build_pert(grid)
    breakdown = energy(field, cfg.params, pert)
    _dump(
        {
            "dimension": cfg.dimension,
            "a": cfg.params.a,
            "b": cfg.params.b,
            "h1_norm": h1_norm(field),
            "energy": breakdown.to_dict(),
        },
        cfg.out_result,
    )
    return 0


def _solve_payload(cfg: ProblemConfig, result) -> dict:
    return {
        "dimension": cfg.dimension,
        "a": cfg.params.a,
        "b": cfg.params.b,
        "lambda": cfg.lam,
        "mu": cfg.mu,
        "seed": cfg.solver.seed,
        **result.to_dict(),
    }


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    grid = cfg.build_grid()
    pert = cfg.build_pert(grid)
    out_path = args.out or cfg.out_result

    if args.method == "multistart":
        results = multistart_search(cfg.params, grid, pert=pert, cfg=cfg.solver)
        payload = {
            "method": "multistart",
            "count": len(results),
            "seed": cfg.solver.seed,
            "results": [r.to_dict() for r in results],
        }
        _dump(payload, out_path)
        if results and cfg.out_field:
            write_field_csv(results[0].field, cfg.out_field)
        return 0 if results else 2

    solver = fixed_point_solve if args.method == "fixed-point" else minimize
    result = solver(cfg.params, grid, pert=pert, cfg=cfg.solver)
    _dump(_solve_payload(cfg, result), out_path)
    if cfg.out_field:
        write_field_csv(result.field, cfg.out_field)
    return 0 if result.converged else 2


def _sweep_worker(task):
    index, cfg, a, b, lam, method = task
    from dataclasses import replace as dc_replace

    params = KirchhoffParams(a=a, b=b)
    grid = cfg.build_grid()
    pert = cfg.build_pert(grid)
    pert = dc_replace(pert, lam=lam)
    solver = fixed_point_solve if method == "fixed-point" else minimize
    try:
        result = solver(params, grid, pert=pert, cfg=cfg.solver)
        row = {
            "a": a,
            "b": b,
            "lambda": lam,
            "converged": result.converged,
            "iterations": result.iterations,
            "residual": result.residual,
            "h1_norm": h1_norm(result.field),
            "energy_total": float(result.energy.total),
            "error": "",
        }
    except (UnboundedEnergyError, DivergenceError) as exc:
        row = {
            "a": a,
            "b": b,
            "lambda": lam,
            "converged": False,
            "iterations": 0,
            "residual": float("nan"),
            "h1_norm": float("nan"),
            "energy_total": float("nan"),
            "error": type(exc).__name__,
        }
    return index, row


_SWEEP_COLUMNS = ["a", "b", "lambda", "converged", "iterations", "residual",
                  "h1_norm", "energy_total", "error"]


def _cmd_sweep(args) -> int:
    import warnings

    cfg = load_config(args.config)
    a_values = _parse_values_flag(args.a_values, cfg.params.a)
    b_values = _parse_values_flag(args.b_values, cfg.params.b)
    lam_values = _parse_values_flag(args.lambda_values, cfg.lam)
    tasks = []
    index = 0
    for a in a_values:
        for b in b_values:
            for lam in lam_values:
                tasks.append((index, cfg, a, b, lam, args.method))
                index += 1
    rows: list = [None] * len(tasks)
    jobs = args.jobs or min(os.cpu_count() or 1, 8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if jobs > 1 and len(tasks) > 1:
            try:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    for index, row in pool.map(_sweep_worker, tasks):
                        rows[index] = row
            except OSError:
                rows = [None] * len(tasks)
        if any(r is None for r in rows):
            for task in tasks:
                index, row = _sweep_worker(task)
                rows[index] = row
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _source_pieces(cfg: ProblemConfig):
    """(CutoffSpec, H, f, F, alpha0) of the configured source section."""
    if cfg.source is None:
        raise ConfigError("this subcommand needs a [source] section in the config")
    src = cfg.source
    p = src.p

    def H(t):
        return np.abs(np.asarray(t)) ** p / p

    hmax = hmax_on_plateau_range(H, src.t0)
    sigma = src.sigma
    if sigma is None:
        sigma = find_sigma0(cfg.dimension, H, src.t0, hmax=hmax)
    radius = src.cutoff_radius if src.cutoff_radius is not None else 0.9 * cfg.radius
    spec = CutoffSpec(d=cfg.dimension, radius=radius, t0=src.t0, sigma=sigma)
    f_power, F_power = power_source(p)

    def f(t):
        return src.alpha0 * f_power(t)

    def F(t):
        return src.alpha0 * F_power(t)

    return spec, H, f, F, src.alpha0, hmax


def _cmd_lambda_tilde(args) -> int:
    cfg = load_config(args.config)
    spec, H, _, _, alpha0, hmax = _source_pieces(cfg)
    value = lambda_tilde(spec, cfg.params, H, alpha0=alpha0, hmax=hmax)
    _dump(
        {
            "lambda_tilde": value,
            "sigma": spec.sigma,
            "t0": spec.t0,
            "cutoff_radius": spec.radius,
            "hmax": hmax,
            "alpha0": alpha0,
        },
        cfg.out_result,
    )
    return 0


def _cmd_lambda_star(args) -> int:
    cfg = load_config(args.config)
    spec, H, f, F, alpha0, hmax = _source_pieces(cfg)
    tilde = lambda_tilde(spec, cfg.params, H, alpha0=alpha0, hmax=hmax)
    kinks = (spec.sigma * spec.radius, spec.radius)
    grid = cfg.build_grid(include=kinks)
    witness = build_cutoff(spec, grid)
    estimate = lambda_star_estimate(
        cfg.params, grid, f, F, cfg=cfg.solver, extra_starts=[witness]
    )
    _dump(
        {
            "lambda_star_estimate": estimate,
            "lambda_tilde": tilde,
            "gap": tilde - estimate,
            "sigma": spec.sigma,
            "t0": spec.t0,
            "cutoff_radius": spec.radius,
        },
        cfg.out_result,
    )
    return 0


def _cmd_curves(args) -> int:
    dims = _parse_dims(args.dims)
    a_grid = _parse_grid_values(args.a_grid)
    rows = emit_curves(dims, a_grid)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["d", "a", "b_L", "b_PS", "b_C"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="kirchhoff", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("constants", help="print omega_d, S_d, L_d, PS_d, C_d")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_constants)

    p = sub.add_parser("classify", help="regime report for (d, a, b) as JSON")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--tol", type=float, default=0.0,
                   help="boundary tolerance for the threshold comparisons")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("scalar", help="evaluate/minimize/certify a profile function")
    p.add_argument("--kind", choices=["f", "ft", "fb"], required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--eval", type=float, default=None, metavar="X")
    mode.add_argument("--min", action="store_true")
    mode.add_argument("--certify", action="store_true")
    p.set_defaults(func=_cmd_scalar)

    p = sub.add_parser("energy", help="energy breakdown of a stored field")
    p.add_argument("--config", required=True)
    p.add_argument("--field", required=True, help="CSV file with (r, u) rows")
    p.set_defaults(func=_cmd_energy)

    p = sub.add_parser("solve", help="solve the configured problem")
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=["descent", "fixed-point", "multistart"],
                   default="descent")
    p.add_argument("--out", default=None, help="result JSON path")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="one solve per (a, b, lambda) triple, CSV out")
    p.add_argument("--config", required=True)
    p.add_argument("--a-values", default=None, help="comma list or start:stop:count")
    p.add_argument("--b-values", default=None)
    p.add_argument("--lambda-values", default=None)
    p.add_argument("--method", choices=["descent", "fixed-point"], default="descent")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("lambda-star", help="quotient-threshold estimate and bound")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_lambda_star)

    p = sub.add_parser("lambda-tilde", help="closed-form threshold upper bound")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_lambda_tilde)

    p = sub.add_parser("curves", help="threshold curve families as CSV")
    p.add_argument("--dims", required=True, help="e.g. 5..12 or 4,6,8")
    p.add_argument("--a-grid", default="0.25:4.0:16")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_curves)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"kirchhoff: error: {exc}", file=sys.stderr)
        return 1
    except (UnboundedEnergyError, DivergenceError, RuntimeError) as exc:
        print(f"kirchhoff: solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
