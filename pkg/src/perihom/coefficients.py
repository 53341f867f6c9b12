"""Phase conductivities, interface conductivity and source terms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError

# sampling grid used to validate coefficients given as functions
_SAMPLES_PER_SIDE = 8


def sym_eigvalsh(a) -> np.ndarray:
    """Ascending eigenvalues of symmetric 2x2 or 3x3 matrices, closed form.

    Works on stacks ``(..., n, n)``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    if n == 1:
        return a[..., 0, :].copy()
    if n == 2:
        mean = 0.5 * (a[..., 0, 0] + a[..., 1, 1])
        half = 0.5 * (a[..., 0, 0] - a[..., 1, 1])
        r = np.hypot(half, 0.5 * (a[..., 0, 1] + a[..., 1, 0]))
        return np.stack([mean - r, mean + r], axis=-1)
    if n == 3:
        # trigonometric solution of the characteristic cubic
        q = np.trace(a, axis1=-2, axis2=-1) / 3.0
        b = a - q[..., None, None] * np.eye(3)
        p2 = np.sum(b * b, axis=(-2, -1)) / 6.0
        p = np.sqrt(p2)
        safe = np.where(p > 0, p, 1.0)
        c = b / safe[..., None, None]
        det = (c[..., 0, 0] * (c[..., 1, 1] * c[..., 2, 2] - c[..., 1, 2] * c[..., 2, 1])
               - c[..., 0, 1] * (c[..., 1, 0] * c[..., 2, 2] - c[..., 1, 2] * c[..., 2, 0])
               + c[..., 0, 2] * (c[..., 1, 0] * c[..., 2, 1] - c[..., 1, 1] * c[..., 2, 0]))
        r = det / 2.0
        phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
        e_hi = q + 2 * p * np.cos(phi)
        e_lo = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
        e_mid = 3 * q - e_hi - e_lo
        return np.sort(np.stack([e_lo, e_mid, e_hi], axis=-1), axis=-1)
    raise ValueError(f"only 1x1, 2x2 and 3x3 matrices are supported, got {n}x{n}")


class Expression:
    """Source term from the fixed catalog.

    ``"const:c"``, ``"sinpi2"`` (``2 pi^2 sin(pi x1) sin(pi x2)``) and
    ``"poly:c00,c10,c01"`` (``c00 + c10 x1 + c01 x2``). Callable on points of
    shape ``(..., dim)``.
    """

    def __init__(self, text: str):
        self.text = text.strip()
        kind, _, args = self.text.partition(":")
        kind = kind.strip().lower()
        try:
            coeffs = [float(v) for v in args.split(",")] if args.strip() else []
        except ValueError:
            raise ConfigError(f"bad numbers in expression {text!r}") from None
        if kind == "const" and len(coeffs) == 1:
            self.kind = "const"
        elif kind == "sinpi2" and not coeffs:
            self.kind = "sinpi2"
        elif kind == "poly" and len(coeffs) == 3:
            self.kind = "poly"
        else:
            raise ConfigError(f"unknown expression {text!r}")
        self.coeffs = tuple(coeffs)
        if not all(math.isfinite(c) for c in self.coeffs):
            raise ConfigError(f"non-finite value in expression {text!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "const":
            return np.full(x.shape[:-1], self.coeffs[0])
        if self.kind == "sinpi2":
            return 2 * np.pi**2 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])
        c00, c10, c01 = self.coeffs
        return c00 + c10 * x[..., 0] + c01 * x[..., 1]

    def integral(self) -> float:
        """Exact integral over the unit square/cube."""
        if self.kind == "const":
            return self.coeffs[0]
        if self.kind == "sinpi2":
            return 8.0
        c00, c10, c01 = self.coeffs
        return c00 + 0.5 * c10 + 0.5 * c01

    def scaled(self, s: float) -> "Expression":
        if self.kind == "const":
            return Expression(f"const:{s * self.coeffs[0]!r}")
        if self.kind == "poly":
            return Expression("poly:" + ",".join(repr(s * c) for c in self.coeffs))
        return _ScaledExpression(self, s)

    def __repr__(self):
        return f"Expression({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and self.text == other.text

    def __hash__(self):
        return hash(self.text)


class _ScaledExpression(Expression):
    def __init__(self, base: Expression, s: float):
        self.base, self.s = base, s
        self.text = f"{s!r}*{base.text}"
        self.kind, self.coeffs = base.kind, base.coeffs

    def __call__(self, x):
        return self.s * self.base(x)

    def integral(self):
        return self.s * self.base.integral()


def as_source(value):
    """Coerce a number, catalog string or callable into a source function."""
    if isinstance(value, Expression) or callable(value):
        return value
    if isinstance(value, str):
        return Expression(value)
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Expression(f"const:{float(value)!r}")
    raise ConfigError(f"cannot interpret {value!r} as a source term")


def _unit_samples(dim: int) -> np.ndarray:
    c = (np.arange(_SAMPLES_PER_SIDE) + 0.5) / _SAMPLES_PER_SIDE
    return np.stack(np.meshgrid(*([c] * dim), indexing="ij"), axis=-1).reshape(-1, dim)


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Conductivities ``A1``, ``A2``, interface conductivity ``gamma``, sources ``f1``, ``f2``.

    ``A1``/``A2`` are symmetric ``dim x dim`` matrices or Y-periodic functions of
    the cell coordinate ``y`` returning ``(..., dim, dim)``. ``gamma`` is a
    number or a function of ``y``. Sources are functions of the macro
    coordinate ``x`` (see :class:`Expression`). Everything is validated on
    construction: ellipticity of both tensors, ``gamma >= 0``, finite sources.
    """

    A1: object
    A2: object
    gamma: object = 0.0
    f1: object = 0.0
    f2: object = 0.0
    dim: int | None = None

    def __post_init__(self):
        dim = self.dim
        for name in ("A1", "A2"):
            value = getattr(self, name)
            if not callable(value):
                arr = np.array(value, dtype=float)
                if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                    raise ConfigError(f"expected a square matrix, got shape {arr.shape}", key=name)
                if dim is None:
                    dim = arr.shape[0]
                elif arr.shape[0] != dim:
                    raise ConfigError(f"expected {dim}x{dim}, got {arr.shape}", key=name)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if dim is None:
            raise ConfigError("dim is required when both tensors are functions", key="dim")
        object.__setattr__(self, "dim", dim)
        y = _unit_samples(dim)
        object.__setattr__(self, "ellipticity", min(self._check_tensor("A1", y), self._check_tensor("A2", y)))

        gamma = self.gamma
        if not callable(gamma):
            gamma = float(gamma)
            object.__setattr__(self, "gamma", gamma)
        g = np.asarray(self.gamma_at(y), dtype=float)
        if not np.all(np.isfinite(g)):
            raise ConfigError("gamma must be finite", key="gamma")
        if np.any(g < 0):
            raise ConfigError("gamma must be nonnegative", key="gamma")

        for name in ("f1", "f2"):
            src = as_source(getattr(self, name))
            object.__setattr__(self, name, src)
            if not np.all(np.isfinite(src(y))):
                raise ConfigError("source must be finite on the domain", key=name)

    def _check_tensor(self, name, y) -> float:
        value = getattr(self, name)
        a = np.asarray(value(y) if callable(value) else value, dtype=float)
        if a.shape[-2:] != (self.dim, self.dim):
            raise ConfigError(f"expected {self.dim}x{self.dim} tensors, got {a.shape}", key=name)
        if not np.all(np.isfinite(a)):
            raise ConfigError("tensor must be finite", key=name)
        scale = max(np.abs(a).max(), 1.0)
        if np.abs(a - np.swapaxes(a, -1, -2)).max() > 1e-12 * scale:
            raise ConfigError("tensor must be symmetric", key=name)
        low = float(sym_eigvalsh(a).min())
        if low <= 0:
            raise ConfigError(f"tensor is not elliptic (smallest eigenvalue {low:g})", key=name)
        return low

    @property
    def constant_tensors(self) -> bool:
        return not (callable(self.A1) or callable(self.A2))

    def tensor_at(self, labels, y) -> np.ndarray:
        """Conductivity at cell coordinates ``y`` for phase ``labels``; shape ``labels.shape + (dim, dim)``."""
        labels = np.asarray(labels)
        out = np.empty(labels.shape + (self.dim, self.dim))
        y = np.asarray(y, dtype=float)
        for phase, a in ((1, self.A1), (2, self.A2)):
            mask = labels == phase
            if not np.any(mask):
                continue
            out[mask] = a(y[mask]) if callable(a) else a
        return out

    def gamma_at(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if callable(self.gamma):
            return np.asarray(self.gamma(y), dtype=float)
        return np.full(y.shape[:-1], self.gamma)

    def source_at(self, labels, x) -> np.ndarray:
        labels = np.asarray(labels)
        x = np.asarray(x, dtype=float)
        return np.where(labels == 2, self.f2(x), self.f1(x))

    def scaled(self, s: float) -> "CoefficientSet":
        """Same set with both conductivity tensors multiplied by ``s``."""
        if s <= 0:
            raise ContractError("scale factor must be positive")

        def scale(a):
            if callable(a):
                return lambda y: s * np.asarray(a(y))
            return s * a

        return CoefficientSet(scale(self.A1), scale(self.A2), self.gamma, self.f1, self.f2, self.dim)

    def with_changes(self, **kwargs) -> "CoefficientSet":
        fields = dict(A1=self.A1, A2=self.A2, gamma=self.gamma, f1=self.f1, f2=self.f2, dim=self.dim)
        fields.update(kwargs)
        return CoefficientSet(**fields)


def isotropic(value: float, dim: int = 2) -> np.ndarray:
    return float(value) * np.eye(dim)
