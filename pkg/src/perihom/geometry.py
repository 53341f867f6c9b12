"""Unit cell with a box inclusion, and its epsilon-periodic tiling of the unit square/cube.

Conventions
-----------
Grids are uniform with ``M`` cells per side. Cells and nodes are indexed with
``"ij"`` ordering, node ``(i, j)`` sits at ``(i*h, j*h)``. Flat indices use
C order (``np.ravel_multi_index``). Phase labels are ``1`` (matrix, Y1) and
``2`` (inclusion, Y2).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DomainError, ResourceError

DEFAULT_MAX_NODES = 2**24
_ALIGN_TOL = 1e-9


def _as_fraction(value: float, m: int) -> Fraction:
    return Fraction(round(value * m), m)


def is_aligned(value: float, m: int) -> bool:
    return abs(value * m - round(value * m)) <= _ALIGN_TOL


@dataclass(frozen=True)
class CellGeometry:
    """Box inclusion ``Y2 = (lo, hi)`` inside ``Y = (0, 1)^dim``.

    ``m`` is the default number of grid cells per cell side; the inclusion
    faces must fall on grid lines for it. An axis with ``lo == 0`` and
    ``hi == 1`` makes the inclusion a layer spanning the whole period in that
    direction. Inclusions that touch the boundary of Y are accepted for cell
    computations but refused by :func:`tile`.
    """

    dim: int
    lo: tuple
    hi: tuple
    m: int = 16

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim!r}", key="dim")
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != self.dim:
            raise ConfigError(f"expected {self.dim} entries, got {len(lo)}", key="inclusion.min")
        if len(hi) != self.dim:
            raise ConfigError(f"expected {self.dim} entries, got {len(hi)}", key="inclusion.max")
        for a, b in zip(lo, hi):
            if not (0.0 <= a < b <= 1.0):
                raise ConfigError(f"need 0 <= min < max <= 1, got ({a}, {b})", key="inclusion")
        if not isinstance(self.m, (int, np.integer)) or self.m < 1:
            raise ConfigError(f"m must be a positive integer, got {self.m!r}", key="m")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        self.check_aligned(self.m)

    def check_aligned(self, m: int) -> None:
        for a, b in zip(self.lo, self.hi):
            if not (is_aligned(a, m) and is_aligned(b, m)):
                raise ConfigError(
                    f"inclusion ({a}, {b}) is not aligned with a grid of {m} cells per side",
                    key="inclusion",
                )

    @property
    def strict(self) -> bool:
        """True when the closed inclusion lies in the open cell."""
        return all(a > 0.0 for a in self.lo) and all(b < 1.0 for b in self.hi)

    def spanning(self, axis: int) -> bool:
        return self.lo[axis] == 0.0 and self.hi[axis] == 1.0

    def exact_bounds(self):
        lo = [_as_fraction(a, self.m) for a in self.lo]
        hi = [_as_fraction(b, self.m) for b in self.hi]
        return lo, hi

    def exact_volume_fractions(self):
        """``(|Y1|, |Y2|)`` as exact fractions."""
        lo, hi = self.exact_bounds()
        v2 = Fraction(1)
        for a, b in zip(lo, hi):
            v2 *= b - a
        return 1 - v2, v2

    @property
    def volume_fractions(self):
        return tuple(float(v) for v in self.exact_volume_fractions())

    def exact_interface_measure(self) -> Fraction:
        """Analytic measure of the interface (perimeter in 2D), exact."""
        lo, hi = self.exact_bounds()
        total = Fraction(0)
        for d in range(self.dim):
            if self.spanning(d):
                continue
            face = Fraction(1)
            for e in range(self.dim):
                if e != d:
                    face *= hi[e] - lo[e]
            total += 2 * face
        return total

    @property
    def interface_measure(self) -> float:
        return float(self.exact_interface_measure())


def phase_indicator(geom: CellGeometry, y):
    """Phase label (1 or 2) of points of the half-open unit cell.

    Accepts one point of shape ``(dim,)`` or a batch ``(..., dim)``. Points on
    the interface belong to phase 1.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != geom.dim:
        raise DomainError(f"points must have {geom.dim} coordinates, got shape {y.shape}")
    if np.any(y < 0.0) or np.any(y >= 1.0):
        raise DomainError("points must lie in [0, 1)^dim")
    inside = np.ones(y.shape[:-1], dtype=bool)
    for d in range(geom.dim):
        if geom.spanning(d):
            continue
        inside &= (y[..., d] > geom.lo[d]) & (y[..., d] < geom.hi[d])
    labels = np.where(inside, 2, 1).astype(np.int8)
    if labels.ndim == 0:
        return int(labels)
    return labels


def cell_midpoints(dim: int, cells: int) -> np.ndarray:
    """Midpoints of a ``cells**dim`` grid on the unit cube, shape ``(cells,)*dim + (dim,)``."""
    c = (np.arange(cells) + 0.5) / cells
    return np.stack(np.meshgrid(*([c] * dim), indexing="ij"), axis=-1)


def cell_labels(geom: CellGeometry, m: int) -> np.ndarray:
    """Phase label of every grid cell of the unit cell, sampled at midpoints."""
    geom.check_aligned(m)
    return phase_indicator(geom, cell_midpoints(geom.dim, m))


@dataclass(frozen=True)
class Facets:
    """Grid facets lying on an interface.

    ``nodes[f]`` are the flat indices of the ``2**(dim-1)`` corner nodes of
    facet ``f``; ``normals[f]`` is the unit normal pointing out of phase 1
    (into phase 2). All facets have measure ``h**(dim-1)``.
    """

    nodes: np.ndarray
    midpoints: np.ndarray
    normals: np.ndarray
    cells_per_side: int
    dim: int

    def __len__(self):
        return len(self.nodes)

    @property
    def h(self) -> float:
        return 1.0 / self.cells_per_side

    @property
    def facet_measure(self) -> float:
        return self.h ** (self.dim - 1)

    @property
    def exact_total_measure(self) -> Fraction:
        return len(self) * Fraction(1, self.cells_per_side) ** (self.dim - 1)

    @property
    def total_measure(self) -> float:
        return float(self.exact_total_measure)


def _facets_from_labels(labels: np.ndarray, periodic: bool) -> Facets:
    dim = labels.ndim
    cells = labels.shape[0]
    node_shape = (cells + 1,) * dim
    # corner offsets of an axis-d facet: 0/1 in every axis except d
    nodes, mids, normals = [], [], []
    for d in range(dim):
        if periodic:
            nb = np.roll(labels, -1, axis=d)
            lab = labels
        else:
            lab = np.take(labels, np.arange(cells - 1), axis=d)
            nb = np.take(labels, np.arange(1, cells), axis=d)
        k = np.argwhere(lab != nb)
        if len(k) == 0:
            continue
        sign = np.where(lab[tuple(k.T)] == 1, 1.0, -1.0)
        plane = k.copy()
        plane[:, d] += 1
        corners = []
        for bits in itertools.product((0, 1), repeat=dim - 1):
            off = np.insert(np.array(bits, dtype=np.int64), d, 0)
            corners.append(np.ravel_multi_index(tuple((plane + off).T), node_shape))
        nodes.append(np.stack(corners, axis=1))
        mid = (k + 0.5) / cells
        mid[:, d] = plane[:, d] / cells
        mids.append(mid)
        nv = np.zeros((len(k), dim))
        nv[:, d] = sign
        normals.append(nv)
    if nodes:
        return Facets(np.concatenate(nodes), np.concatenate(mids), np.concatenate(normals), cells, dim)
    return Facets(
        np.zeros((0, 2 ** (dim - 1)), dtype=np.int64), np.zeros((0, dim)), np.zeros((0, dim)), cells, dim
    )


def interface_facets(geom: CellGeometry, m: int) -> Facets:
    """Facets of the interface inside the unit cell on an ``m``-cells-per-side grid.

    The cell is treated as periodic, so a layer touching the cell boundary
    contributes its wrapped face too.
    """
    return _facets_from_labels(cell_labels(geom, m), periodic=True)


@dataclass(frozen=True)
class TiledDomain:
    """Structured grid over the unit square/cube with per-cell phase labels.

    ``n`` tiles per side of ``m`` cells each; ``eps = 1/n``. The unit-cell
    grid used by cell problems is the ``n = 1`` periodic case.
    """

    dim: int
    n: int
    m: int
    labels: np.ndarray
    facets: Facets
    periodic: bool = False
    geom: CellGeometry | None = field(default=None, compare=False)

    @property
    def cells(self) -> int:
        return self.n * self.m

    @property
    def h(self) -> float:
        return 1.0 / self.cells

    @property
    def exact_eps(self) -> Fraction:
        return Fraction(1, self.n)

    @property
    def eps(self) -> float:
        return 1.0 / self.n

    @property
    def node_shape(self):
        return (self.cells + 1,) * self.dim

    @property
    def n_nodes(self) -> int:
        return (self.cells + 1) ** self.dim

    def cell_midpoints(self) -> np.ndarray:
        return cell_midpoints(self.dim, self.cells)

    def local_coords(self, x) -> np.ndarray:
        """``frac(x / eps)``: position inside the periodicity cell."""
        y = np.asarray(x, dtype=float) * self.n
        return y - np.floor(y)

    def interface_measure_gap(self) -> Fraction:
        """Exact ``eps*|Sigma^eps| - |Omega|*|Sigma|``; zero for a consistent tiling."""
        if self.geom is None:
            return Fraction(0)
        return self.exact_eps * self.facets.exact_total_measure - self.geom.exact_interface_measure()

    @property
    def phase2_fraction(self) -> float:
        return float(np.count_nonzero(self.labels == 2)) / self.labels.size


def _check_budget(dim: int, cells: int, max_nodes: int) -> None:
    if (cells + 1) ** dim > max_nodes:
        raise ResourceError(f"grid with {(cells + 1) ** dim} nodes exceeds the budget of {max_nodes}")


def cell_domain(geom: CellGeometry, m: int | None = None, max_nodes: int = DEFAULT_MAX_NODES) -> TiledDomain:
    """The periodic unit-cell grid used by the cell problems."""
    m = geom.m if m is None else m
    _check_budget(geom.dim, m, max_nodes)
    labels = cell_labels(geom, m)
    return TiledDomain(geom.dim, 1, m, labels, _facets_from_labels(labels, periodic=True), True, geom)


def tile(geom: CellGeometry, n: int, m: int | None = None, max_nodes: int = DEFAULT_MAX_NODES) -> TiledDomain:
    """Tile the unit square/cube with ``n**dim`` scaled copies of the cell (``eps = 1/n``)."""
    m = geom.m if m is None else m
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    if not geom.strict:
        raise ConfigError("the inclusion must not touch the cell boundary for an eps-tiling", key="inclusion")
    _check_budget(geom.dim, n * m, max_nodes)
    labels = np.tile(cell_labels(geom, m), (n,) * geom.dim)
    return TiledDomain(geom.dim, n, m, labels, _facets_from_labels(labels, periodic=False), False, geom)


def uniform_domain(dim: int, cells: int, max_nodes: int = DEFAULT_MAX_NODES) -> TiledDomain:
    """Homogeneous grid (all phase 1, no interface), used by the macro problem."""
    _check_budget(dim, cells, max_nodes)
    labels = np.ones((cells,) * dim, dtype=np.int8)
    return TiledDomain(dim, 1, cells, labels, _facets_from_labels(labels, periodic=False), False, None)
