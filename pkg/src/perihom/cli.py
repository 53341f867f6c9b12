"""Command line entry point: ``perihom {cell,micro,macro,sweep,limits} --config FILE --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 failed ``--check``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .cell import EffectiveSource, homogenize
from .coefficients import sym_eigvalsh
from .config import Config, load_config
from .errors import ConfigError, ContractError, ConvergenceError, DomainError, PerihomError, ResourceError
from .fem import GridField
from .harness import run_sweep, standard_limit_tests, worker_count, write_json
from .solvers import parse_eps, solve_macro, solve_micro

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4
ENERGY_TOL = 1e-8

log = logging.getLogger("perihom")


class CheckFailed(Exception):
    pass


def _check(condition: bool, message: str) -> None:
    if condition:
        log.info("check passed: %s", message)
    else:
        raise CheckFailed(message)


def write_field_csv(path, field: GridField) -> None:
    """One ``x1,x2[,x3],value`` line per node."""
    dim, cells = field.dim, field.cells
    axes = np.meshgrid(*([np.linspace(0.0, 1.0, cells + 1)] * dim), indexing="ij")
    with open(path, "w") as fh:
        fh.write(",".join([f"x{d + 1}" for d in range(dim)] + ["value"]) + "\n")
        for row in zip(*(a.ravel() for a in axes), field.flat()):
            fh.write(",".join(f"{v:.12e}" for v in row) + "\n")


def write_corrector_csv(path, correctors) -> None:
    dim, cells = correctors[0].dim, correctors[0].cells
    axes = np.meshgrid(*([np.linspace(0.0, 1.0, cells + 1)] * dim), indexing="ij")
    header = ["node"] + [f"y{d + 1}" for d in range(dim)] + [f"omega{j + 1}" for j in range(len(correctors))]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        cols = [a.ravel() for a in axes] + [c.flat() for c in correctors]
        for i, row in enumerate(zip(*cols)):
            fh.write(",".join([str(i)] + [f"{v:.12e}" for v in row]) + "\n")


def _eps_tag(n: int) -> str:
    return f"1-{n}"


def cmd_cell(cfg: Config, args) -> None:
    m = args.m or cfg.m
    hom = homogenize(cfg.geometry, cfg.coeffs, m, cfg.solver, workers=min(worker_count(), cfg.geometry.dim))
    write_json(args.out / "ahom.json", hom.to_json())
    if args.fields:
        write_corrector_csv(args.out / "correctors.csv", hom.correctors)
    print("A_hom =", np.array2string(hom.A_hom, precision=10))
    if args.check:
        a = hom.A_hom
        _check(hom.asymmetry() <= 1e-10 * np.abs(a).max(), "A_hom symmetric")
        _check(hom.eigenvalues().min() > 0, "A_hom positive definite")
        _check(all(s.energy_gap <= ENERGY_TOL for s in hom.solves), "cell energy identity")
        c = cfg.coeffs
        if c.constant_tensors:
            v1, v2 = hom.vol_frac
            e1, e2 = sym_eigvalsh(c.A1), sym_eigvalsh(c.A2)
            if np.ptp(e1) == 0 and np.ptp(e2) == 0:
                a1, a2 = e1[0], e2[0]
                lower = 1.0 / (v1 / a1 + v2 / a2)
                upper = v1 * a1 + v2 * a2
                ev = hom.eigenvalues()
                slack = 1e-9 * upper
                _check(bool(np.all(ev >= lower - slack) and np.all(ev <= upper + slack)), "Voigt-Reuss bounds")


def cmd_micro(cfg: Config, args) -> None:
    n = parse_eps(args.eps) if args.eps else max(cfg.eps)
    sol = solve_micro(cfg.geometry, cfg.coeffs, n, cfg.m, cfg.solver)
    write_field_csv(args.out / f"micro_eps_{_eps_tag(n)}.csv", sol.field)
    write_json(args.out / f"micro_eps_{_eps_tag(n)}.json", sol.summary())
    print(f"eps=1/{n} h1_norm={sol.h1_norm:.6e} iters={sol.iterations}")
    if args.check:
        _check(sol.energy_gap <= ENERGY_TOL, "energy identity")


def cmd_macro(cfg: Config, args) -> None:
    cells = args.cells or max(cfg.eps) * cfg.m
    hom = homogenize(cfg.geometry, cfg.coeffs, cfg.m, cfg.solver)
    sol = solve_macro(hom.A_hom, EffectiveSource(cfg.geometry, cfg.coeffs, hom.I_gamma), cells, cfg.solver,
                      dim=cfg.geometry.dim)
    write_field_csv(args.out / "macro.csv", sol.field)
    write_json(args.out / "macro.json", sol.summary())
    print(f"macro h={sol.h:.6e} h1_norm={sol.field.h1_seminorm():.6e} iters={sol.iterations}")
    if args.check:
        _check(sol.energy_gap <= ENERGY_TOL, "energy identity")


def cmd_sweep(cfg: Config, args) -> None:
    keep = {} if args.fields else None
    report = run_sweep(cfg, keep=keep)
    (args.out / "report.csv").write_text(report.to_csv(timing=not args.no_timing))
    write_json(args.out / "sweep.json", report.to_json())
    write_json(args.out / "ahom.json", {"A_hom": report.A_hom, "I_gamma": report.I_gamma,
                                        "vol_frac": list(cfg.geometry.volume_fractions), "m": cfg.m})
    if keep:
        for n, (micro, macro) in keep.items():
            write_field_csv(args.out / f"micro_eps_{_eps_tag(n)}.csv", micro.field)
            write_field_csv(args.out / f"macro_eps_{_eps_tag(n)}.csv", macro.field)
    sys.stdout.write(report.to_csv(timing=not args.no_timing))
    if not report.valid:
        raise ConvergenceError(f"sweep aborted: {report.error}", float("nan"), 0)
    if args.check:
        l2 = report.column("l2_err")
        _check(bool(np.all(np.isfinite(l2)) and np.all(l2 >= 0)), "finite nonnegative errors")
        _check(all(g <= ENERGY_TOL for g in report.energy_gaps()), "energy identity on every solve")
        if cfg.is_identity:
            _check(bool(np.all(l2 <= 1e-8)), "identity configuration: micro equals macro")
            return
        rel = report.column("l2_rel")
        _check(bool(np.all(np.diff(rel) < 0)), "relative L2 error strictly decreasing")
        by_n = {r.n: r.l2_rel for r in report.rows}
        for n, err in by_n.items():
            if 4 * n in by_n:
                _check(by_n[4 * n] <= 0.5 * err, f"error halves from eps=1/{n} to 1/{4 * n}")
        _check(bool(np.all(report.column("h1_corr_err") < report.column("h1_err"))), "corrector reduces H1 error")
        h1 = report.column("h1_norm")
        _check(bool(h1.max() <= 2 * h1.min()), "H1 norms bounded within a factor 2")


def cmd_limits(cfg: Config, args) -> None:
    results = standard_limit_tests(cfg)
    write_json(args.out / "limits.json", [r.to_json() for r in results])
    for r in results:
        print(f"{r.test_id:32s} gap={r.gap:.3e} reference={r.reference:.6e}")
    if args.check:
        by_id = {r.test_id: r for r in results}
        _check(by_id["interface:one:1"].gap == 0.0, "interface measure identity")
        _check(by_id["two_scale:oscillate:cos2piy1"].gap <= 0.02, "cos against cos(2 pi y1) tends to 1/2")
        _check(by_id["two_scale:oscillate:1"].gap <= 0.02, "cos against 1 tends to 0")


COMMANDS = {"cell": cmd_cell, "micro": cmd_micro, "macro": cmd_macro, "sweep": cmd_sweep, "limits": cmd_limits}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perihom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON configuration file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--check", action="store_true", help="verify results, exit 4 on failure")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "cell":
            p.add_argument("--m", type=int, default=None, help="cells per side of the unit cell grid")
        if name in ("cell", "sweep"):
            p.add_argument("--fields", action="store_true", help="also write field CSVs")
        if name == "micro":
            p.add_argument("--eps", default=None, help="eps as 1/n (default: smallest in the sweep)")
        if name == "macro":
            p.add_argument("--cells", type=int, default=None, help="grid cells per side")
        if name == "sweep":
            p.add_argument("--no-timing", action="store_true", help="write 0 in the seconds column")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ConvergenceError, ResourceError, ContractError, PerihomError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
