"""JSON run configuration: geometry, coefficients, solver and sweep blocks."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import CoefficientSet, Expression
from .errors import ConfigError, PerihomError
from .geometry import CellGeometry
from .linalg import SolverOptions
from .solvers import parse_eps

DEFAULT_EPS = ("1/4", "1/8", "1/16", "1/32")
DEFAULT_M = 16
_BLOCKS = {"geometry", "coefficients", "solver", "sweep", "limits"}


@dataclass(frozen=True)
class LimitsOptions:
    quad_cells: int = 512
    g: str = "sinpi2"


@dataclass(frozen=True)
class Config:
    geometry: CellGeometry
    coeffs: CoefficientSet
    solver: SolverOptions
    eps: tuple            # tile counts n, eps = 1/n, decreasing eps
    m: int
    limits: LimitsOptions = LimitsOptions()
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def eps_labels(self) -> list:
        return [f"1/{n}" for n in self.eps]

    def config_hash(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def is_identity(self) -> bool:
        """Same conductivity in both phases, no interface source, same source: micro equals macro."""
        c = self.coeffs
        return (
            c.constant_tensors
            and np.array_equal(c.A1, c.A2)
            and not callable(c.gamma) and c.gamma == 0.0
            and isinstance(c.f1, Expression) and c.f1 == c.f2
        )


def _get(block: dict, key: str, prefix: str, default=None, required=False):
    if key in block:
        return block[key]
    if required:
        raise ConfigError("missing required key", key=f"{prefix}.{key}")
    return default


def _check_keys(block, allowed, prefix):
    if not isinstance(block, dict):
        raise ConfigError("expected a JSON object", key=prefix)
    extra = set(block) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)}", key=prefix)


def _tensor(value, dim, key):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value) * np.eye(dim)
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected a number or a square matrix", key=key) from None
    if arr.shape != (dim, dim):
        raise ConfigError(f"expected a {dim}x{dim} matrix, got shape {arr.shape}", key=key)
    return arr


def _rekey(exc: ConfigError, prefix: str) -> ConfigError:
    key = f"{prefix}.{exc.key}" if exc.key else prefix
    msg = str(exc).split(": ", 1)[-1] if exc.key else str(exc)
    return ConfigError(msg, key=key)


def parse_config(raw: dict) -> Config:
    """Build a validated :class:`Config`; errors name the offending key."""
    _check_keys(raw, _BLOCKS, "config")
    for name in ("geometry", "coefficients"):
        if name not in raw:
            raise ConfigError("missing required block", key=name)

    sweep = raw.get("sweep", {})
    _check_keys(sweep, {"eps", "m"}, "sweep")
    m = _get(sweep, "m", "sweep", DEFAULT_M)
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise ConfigError(f"must be a positive integer, got {m!r}", key="sweep.m")
    eps_raw = _get(sweep, "eps", "sweep", list(DEFAULT_EPS))
    if not isinstance(eps_raw, list) or not eps_raw:
        raise ConfigError("expected a non-empty list", key="sweep.eps")
    try:
        ns = [parse_eps(e) for e in eps_raw]
    except PerihomError as exc:
        raise ConfigError(str(exc), key="sweep.eps") from None
    if len(set(ns)) != len(ns):
        raise ConfigError("duplicate eps values", key="sweep.eps")
    ns = tuple(sorted(ns))

    geo = raw["geometry"]
    _check_keys(geo, {"dim", "inclusion"}, "geometry")
    dim = _get(geo, "dim", "geometry", required=True)
    inc = _get(geo, "inclusion", "geometry", required=True)
    _check_keys(inc, {"min", "max"}, "geometry.inclusion")
    lo = _get(inc, "min", "geometry.inclusion", required=True)
    hi = _get(inc, "max", "geometry.inclusion", required=True)
    try:
        geom = CellGeometry(dim, tuple(lo), tuple(hi), m)
    except ConfigError as exc:
        raise _rekey(exc, "geometry") from None
    except TypeError:
        raise ConfigError("inclusion bounds must be lists of numbers", key="geometry.inclusion") from None

    co = raw["coefficients"]
    _check_keys(co, {"A1", "A2", "gamma", "f1", "f2"}, "coefficients")
    a1 = _tensor(_get(co, "A1", "coefficients", required=True), dim, "coefficients.A1")
    a2 = _tensor(_get(co, "A2", "coefficients", required=True), dim, "coefficients.A2")
    gamma = _get(co, "gamma", "coefficients", 0.0)
    if not isinstance(gamma, (int, float)) or isinstance(gamma, bool):
        raise ConfigError("expected a number", key="coefficients.gamma")
    sources = {}
    for name in ("f1", "f2"):
        value = _get(co, name, "coefficients", "const:0")
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = f"const:{float(value)!r}"
        if not isinstance(value, str):
            raise ConfigError("expected an expression string", key=f"coefficients.{name}")
        try:
            sources[name] = Expression(value)
        except ConfigError as exc:
            raise ConfigError(str(exc), key=f"coefficients.{name}") from None
    try:
        coeffs = CoefficientSet(a1, a2, float(gamma), sources["f1"], sources["f2"], dim)
    except ConfigError as exc:
        raise _rekey(exc, "coefficients") from None

    so = raw.get("solver", {})
    _check_keys(so, {"tol", "max_iter", "precond"}, "solver")
    try:
        solver = SolverOptions(
            tol=float(_get(so, "tol", "solver", 1e-10)),
            max_iter=_get(so, "max_iter", "solver", 0),
            precond=_get(so, "precond", "solver", "jacobi"),
        )
    except ConfigError as exc:
        raise _rekey(exc, "solver") from None
    except (TypeError, ValueError):
        raise ConfigError("bad solver settings", key="solver") from None

    li = raw.get("limits", {})
    _check_keys(li, {"quad_cells", "g"}, "limits")
    quad = _get(li, "quad_cells", "limits", 512)
    if not isinstance(quad, int) or quad < 1:
        raise ConfigError("must be a positive integer", key="limits.quad_cells")
    g = _get(li, "g", "limits", "sinpi2")
    try:
        Expression(g)
    except (ConfigError, AttributeError):
        raise ConfigError(f"bad expression {g!r}", key="limits.g") from None

    return Config(geom, coeffs, solver, ns, m, LimitsOptions(quad, g), raw)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", key=str(path)) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", key=str(path)) from None
    return parse_config(raw)
