"""Epsilon sweeps and two-scale limit functionals.

A sweep homogenizes once, then for every ``eps = 1/n`` solves the micro
problem and the macro problem on the same ``n*m`` grid and records the
distance between them.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .cell import EffectiveSource, HomogenizedData, homogenize
from .coefficients import Expression
from .config import Config
from .errors import ConfigError, PerihomError
from .fem import GridField, node_weights
from .geometry import cell_midpoints, interface_facets, tile
from .solvers import MacroSolution, MicroSolution, broken_h1_errors, solve_macro, solve_micro

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("eps", "h", "l2_err", "l2_rel", "h1_corr_err", "h1_norm", "iters", "seconds")
THREADS_ENV = "PERIHOM_THREADS"
MIN_POINTS_PER_PERIOD = 4


def worker_count(default: int = 1) -> int:
    """Workers from ``PERIHOM_THREADS`` (``0`` means one per CPU)."""
    value = os.environ.get(THREADS_ENV)
    if value is None or value.strip() == "":
        return default
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"expected an integer, got {value!r}", key=THREADS_ENV) from None
    if n < 0:
        raise ConfigError("must be nonnegative", key=THREADS_ENV)
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass
class SweepRow:
    eps: float
    n: int
    h: float
    l2_err: float
    l2_rel: float
    h1_corr_err: float
    h1_err: float
    h1_norm: float
    iters: int
    seconds: float
    micro_energy_gap: float = 0.0
    macro_energy_gap: float = 0.0

    def csv_fields(self, timing: bool = True) -> list:
        seconds = self.seconds if timing else 0.0
        return [
            f"{self.eps:.12e}", f"{self.h:.12e}", f"{self.l2_err:.12e}", f"{self.l2_rel:.12e}",
            f"{self.h1_corr_err:.12e}", f"{self.h1_norm:.12e}", str(self.iters), f"{seconds:.12e}",
        ]


@dataclass
class SweepReport:
    rows: list
    config_hash: str
    A_hom: list
    I_gamma: float
    F_mean: float
    valid: bool = True
    error: str | None = None
    cell_energy_gaps: list = field(default_factory=list)

    def to_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow(row.csv_fields(timing))
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "A_hom": self.A_hom,
            "I_gamma": self.I_gamma,
            "F_mean": self.F_mean,
            "valid": self.valid,
            "error": self.error,
            "cell_energy_gaps": self.cell_energy_gaps,
            "rows": [asdict(r) for r in self.rows],
        }

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def energy_gaps(self) -> list:
        gaps = list(self.cell_energy_gaps)
        for r in self.rows:
            gaps += [r.micro_energy_gap, r.macro_energy_gap]
        return gaps


def l2_difference(a: GridField, b: GridField) -> float:
    """Nodal-quadrature L2 norm of ``a - b`` on their common grid."""
    d = a.flat() - b.flat()
    return float(np.sqrt(node_weights(a.dim, a.cells) @ (d * d)))


@dataclass
class SweepState:
    """Cell data shared by all rows of a sweep."""

    config: Config
    hom: HomogenizedData
    source: EffectiveSource


def prepare(config: Config) -> SweepState:
    hom = homogenize(config.geometry, config.coeffs, config.m, config.solver)
    return SweepState(config, hom, EffectiveSource(config.geometry, config.coeffs, hom.I_gamma))


def sweep_row(state: SweepState, n: int, keep: dict | None = None) -> SweepRow:
    cfg = state.config
    start = time.perf_counter()
    micro = solve_micro(cfg.geometry, cfg.coeffs, n, cfg.m, cfg.solver)
    macro = solve_macro(state.hom.A_hom, state.source, n * cfg.m, cfg.solver, dim=cfg.geometry.dim)
    seconds = time.perf_counter() - start
    l2 = l2_difference(micro.field, macro.field)
    unorm = macro.field.l2_norm()
    h1_err, h1_corr = broken_h1_errors(micro, macro, state.hom)
    if keep is not None:
        keep[n] = (micro, macro)
    log.info("eps=1/%d l2_rel=%.3e iters=%d (%.2fs)", n, l2 / unorm if unorm else l2, micro.iterations, seconds)
    return SweepRow(
        eps=1.0 / n, n=n, h=micro.h, l2_err=l2, l2_rel=l2 / unorm if unorm > 0 else 0.0,
        h1_corr_err=h1_corr, h1_err=h1_err, h1_norm=micro.h1_norm, iters=micro.iterations,
        seconds=seconds, micro_energy_gap=micro.energy_gap, macro_energy_gap=macro.energy_gap,
    )


def run_sweep(config: Config, eps_list=None, workers: int | None = None, keep: dict | None = None) -> SweepReport:
    """Homogenize once, then compare micro and macro solutions for every ``eps``.

    ``eps_list`` holds tile counts ``n`` (default: the config's). Solver
    failures end the sweep with ``valid=False`` and the rows computed so far.
    Pass a dict as ``keep`` to receive the solutions keyed by ``n``.
    """
    ns = sorted(config.eps if eps_list is None else eps_list)
    workers = worker_count() if workers is None else workers
    try:
        state = prepare(config)
    except ConfigError:
        raise
    except PerihomError as exc:
        return SweepReport([], config.config_hash(), [], float("nan"), float("nan"), False, str(exc))
    report = SweepReport(
        rows=[], config_hash=config.config_hash(), A_hom=state.hom.A_hom.tolist(),
        I_gamma=state.hom.I_gamma, F_mean=state.source.integral(),
        cell_energy_gaps=[s.energy_gap for s in state.hom.solves],
    )
    rows = {}
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {n: pool.submit(sweep_row, state, n, keep) for n in ns}
                for n in ns:
                    rows[n] = futures[n].result()
        else:
            for n in ns:
                rows[n] = sweep_row(state, n, keep)
    except ConfigError:
        raise
    except PerihomError as exc:
        report.valid = False
        report.error = str(exc)
    report.rows = [rows[n] for n in ns if n in rows]
    return report


# -- two-scale functionals ---------------------------------------------------

SEQUENCES = ("oscillate", "solution", "one")
TEST_FUNCTIONS = ("1", "g", "cos2piy1", "cos2piy1*g")


@dataclass(frozen=True)
class TestFunction:
    """``phi(x, y) = g(x) * psi(y)`` with ``psi`` in ``{1, cos(2 pi y1)}``."""

    kind: str
    g: Expression | None = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.kind not in TEST_FUNCTIONS:
            raise ConfigError(f"unknown test function {self.kind!r}, expected one of {TEST_FUNCTIONS}")
        if "g" in self.kind and self.g is None:
            object.__setattr__(self, "g", Expression("sinpi2"))

    @property
    def oscillating(self) -> bool:
        return self.kind.startswith("cos")

    def gx(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.g(x) if "g" in self.kind else np.ones(x.shape[:-1])

    def psi(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.cos(2 * np.pi * y[..., 0]) if self.oscillating else np.ones(y.shape[:-1])

    def __call__(self, x, y):
        return self.gx(x) * self.psi(y)

    def g_integral(self) -> float:
        return self.g.integral() if "g" in self.kind else 1.0


@dataclass
class LimitTestResult:
    test_id: str
    eps: list
    values: list
    reference: float
    extrapolated: float
    gaps: list
    reliable: bool = True

    @property
    def gap(self) -> float:
        """Gap at the smallest eps."""
        return self.gaps[-1]

    def to_json(self) -> dict:
        d = asdict(self)
        d["gap"] = self.gap
        return d


def extrapolate(eps, values) -> float:
    """Linear extrapolation to ``eps = 0`` from the two smallest eps."""
    if len(values) < 2:
        return float(values[-1])
    e1, e2 = eps[-2], eps[-1]
    v1, v2 = values[-2], values[-1]
    return float(v2 + (v2 - v1) * e2 / (e1 - e2))


def _quad_points(dim: int, cells: int) -> np.ndarray:
    return cell_midpoints(dim, cells).reshape(-1, dim)


def _interpolate(field: GridField, x) -> np.ndarray:
    axes = [np.linspace(0.0, 1.0, field.cells + 1)] * field.dim
    return RegularGridInterpolator(axes, field.values, method="linear")(x)


def _macro_reference(config: Config, cells: int) -> MacroSolution:
    state = prepare(config)
    return solve_macro(state.hom.A_hom, state.source, cells, config.solver, dim=config.geometry.dim)


def two_scale_test(sequence: str, testfn: str | TestFunction, eps_list, quad_cells: int = 512,
                   config: Config | None = None, g: str | None = None,
                   solutions: dict | None = None) -> LimitTestResult:
    """``int_Omega v^eps(x) phi(x, x/eps) dx`` for each eps, midpoint rule on ``quad_cells**dim`` cells.

    ``sequence`` is ``"oscillate"`` (``cos(2 pi x1/eps)``) or ``"solution"``
    (micro solution, needs ``config``). The reference is the two-scale limit:
    closed form for ``"oscillate"``, the macro solution for ``"solution"``.
    """
    phi = testfn if isinstance(testfn, TestFunction) else TestFunction(testfn, Expression(g) if g else None)
    ns = sorted(eps_list)
    dim = config.geometry.dim if config is not None else 2
    x = _quad_points(dim, quad_cells)
    w = (1.0 / quad_cells) ** dim
    values = []
    for n in ns:
        y = x * n
        y -= np.floor(y)
        if sequence == "oscillate":
            v = np.cos(2 * np.pi * x[:, 0] * n)
        elif sequence == "solution":
            if config is None:
                raise ConfigError("the solution sequence needs a config")
            sol = solutions.get(n) if solutions else None
            if sol is None:
                sol = solve_micro(config.geometry, config.coeffs, n, config.m, config.solver)
            v = _interpolate(sol.field, x)
        else:
            raise ConfigError(f"unknown sequence {sequence!r}, expected 'oscillate' or 'solution'")
        values.append(float(np.sum(v * phi(x, y)) * w))

    if sequence == "oscillate":
        # int_Y cos(2 pi y1) psi(y) dy
        reference = (0.5 if phi.oscillating else 0.0) * phi.g_integral()
    elif phi.oscillating:
        reference = 0.0
    else:
        macro = _macro_reference(config, max(ns) * config.m)
        reference = float(np.sum(_interpolate(macro.field, x) * phi.gx(x)) * w)
    reliable = quad_cells >= MIN_POINTS_PER_PERIOD * max(ns)
    eps = [1.0 / n for n in ns]
    return LimitTestResult(
        test_id=f"two_scale:{sequence}:{phi.kind}",
        eps=eps, values=values, reference=reference,
        extrapolated=extrapolate(eps, values),
        gaps=[abs(v - reference) for v in values], reliable=reliable,
    )


def interface_functional(domain, v_nodes, phi: TestFunction) -> float:
    """``eps * int_{Sigma^eps} v phi(x, x/eps) ds`` by facet-midpoint quadrature."""
    facets = domain.facets
    if len(facets) == 0:
        return 0.0
    mid = facets.midpoints
    y = domain.local_coords(mid)
    v = np.ones(len(facets)) if v_nodes is None else np.asarray(v_nodes).ravel()[facets.nodes].mean(axis=1)
    return float(domain.eps * np.sum(v * phi(mid, y)) * facets.facet_measure)


def interface_limit_test(config: Config, eps_list, testfn: str | TestFunction = "1", sequence: str = "one",
                         g: str | None = None, solutions: dict | None = None) -> LimitTestResult:
    """Compare ``eps * int_{Sigma^eps} v^eps phi^eps ds`` with ``int_{Omega x Sigma} v0 phi``.

    ``sequence`` is ``"one"`` (``v = 1``) or ``"solution"`` (micro solution).
    """
    phi = testfn if isinstance(testfn, TestFunction) else TestFunction(testfn, Expression(g) if g else None)
    geom, m = config.geometry, config.m
    ns = sorted(eps_list)
    values = []
    for n in ns:
        domain = tile(geom, n, m)
        if sequence == "one":
            v = None
        elif sequence == "solution":
            sol = solutions.get(n) if solutions else None
            if sol is None:
                sol = solve_micro(geom, config.coeffs, n, m, config.solver)
            v = sol.field.flat()
        else:
            raise ConfigError(f"unknown sequence {sequence!r}, expected 'one' or 'solution'")
        values.append(interface_functional(domain, v, phi))

    cell_facets = interface_facets(geom, m)
    psi_sigma = float(np.sum(phi.psi(cell_facets.midpoints)) * cell_facets.facet_measure)
    if sequence == "one":
        macro_part = phi.g_integral()
    else:
        macro = _macro_reference(config, max(ns) * m)
        pts = np.stack(np.meshgrid(*([np.linspace(0, 1, macro.field.cells + 1)] * geom.dim), indexing="ij"), -1)
        gx = phi.gx(pts.reshape(-1, geom.dim))
        macro_part = float(node_weights(geom.dim, macro.field.cells) @ (macro.field.flat() * gx))
    reference = macro_part * psi_sigma
    eps = [1.0 / n for n in ns]
    return LimitTestResult(
        test_id=f"interface:{sequence}:{phi.kind}",
        eps=eps, values=values, reference=reference,
        extrapolated=extrapolate(eps, values),
        gaps=[abs(v - reference) for v in values],
    )


def standard_limit_tests(config: Config, keep: dict | None = None) -> list:
    """The battery written by the ``limits`` subcommand."""
    ns = config.eps
    g = config.limits.g
    quad = config.limits.quad_cells
    return [
        interface_limit_test(config, ns, "1"),
        interface_limit_test(config, ns, "g", g=g),
        interface_limit_test(config, ns, "1", sequence="solution", solutions=keep),
        two_scale_test("oscillate", "cos2piy1", ns, quad, config),
        two_scale_test("oscillate", "1", ns, quad, config),
        two_scale_test("oscillate", "g", ns, quad, config, g=g),
        two_scale_test("solution", "g", ns, quad, config, g=g, solutions=keep),
    ]


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
