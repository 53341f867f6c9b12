"""Q1 finite elements on uniform grids of the unit square/cube.

Element integrals use tensor 2-point Gauss rules, exact for Q1 gradients with
a cell-wise constant coefficient. Loads are lumped: each cell contributes
``value * h**dim / 2**dim`` to each of its corners.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .coefficients import CoefficientSet
from .errors import ContractError
from .geometry import TiledDomain

DIRICHLET = "dirichlet"
PERIODIC = "periodic"
_BCS = (DIRICHLET, PERIODIC)


def _frozen_cache(func):
    """``lru_cache`` for functions returning arrays; the cached arrays are read-only."""
    cached = lru_cache(maxsize=32)(func)

    def wrapper(*args):
        out = cached(*args)
        out.setflags(write=False)
        return out

    wrapper.__doc__ = func.__doc__
    wrapper.__name__ = func.__name__
    return wrapper


@dataclass(frozen=True)
class ReferenceElement:
    corners: np.ndarray      # (2^N, N) local corner offsets, C order
    weights: np.ndarray      # (Q,) Gauss weights on [0,1]^N
    points: np.ndarray       # (Q, N)
    values: np.ndarray       # (Q, 2^N) shape functions at Gauss points
    grads: np.ndarray        # (Q, 2^N, N) reference gradients at Gauss points
    mid_grads: np.ndarray    # (2^N, N) reference gradients at the cell centre
    stiffness: np.ndarray    # (N, N, 2^N, 2^N): int d_d phi_a d_e phi_b
    grad_integrals: np.ndarray  # (2^N, N): int grad phi_a


def _shape(corner, xi):
    """Q1 shape function values and gradients of one corner at points ``xi``."""
    factors = np.where(corner == 1, xi, 1.0 - xi)
    dfactors = np.where(corner == 1, 1.0, -1.0) * np.ones_like(xi)
    val = np.prod(factors, axis=-1)
    grad = np.empty_like(xi)
    for d in range(xi.shape[-1]):
        others = np.delete(factors, d, axis=-1)
        grad[..., d] = dfactors[..., d] * np.prod(others, axis=-1)
    return val, grad


@lru_cache(maxsize=None)
def reference_element(dim: int) -> ReferenceElement:
    corners = np.array(list(itertools.product((0, 1), repeat=dim)))
    g = 0.5 / np.sqrt(3.0)
    pts = np.array(list(itertools.product((0.5 - g, 0.5 + g), repeat=dim)))
    w = np.full(len(pts), 0.5**dim)
    vals = np.empty((len(pts), len(corners)))
    grads = np.empty((len(pts), len(corners), dim))
    mid = np.empty((len(corners), dim))
    for a, c in enumerate(corners):
        vals[:, a], grads[:, a, :] = _shape(c, pts)
        _, mid[a] = _shape(c, np.full((1, dim), 0.5))
    stiff = np.einsum("q,qad,qbe->deab", w, grads, grads)
    gint = np.einsum("q,qad->ad", w, grads)
    return ReferenceElement(corners, w, pts, vals, grads, mid, stiff, gint)


@_frozen_cache
def connectivity(dim: int, cells: int) -> np.ndarray:
    """Flat node indices of the corners of every cell, shape ``(cells**dim, 2**dim)``."""
    ref = reference_element(dim)
    node_shape = (cells + 1,) * dim
    k = np.indices((cells,) * dim).reshape(dim, -1)
    return np.stack(
        [np.ravel_multi_index(tuple(k + c[:, None]), node_shape) for c in ref.corners], axis=1
    )


@_frozen_cache
def dirichlet_dof_map(dim: int, cells: int) -> np.ndarray:
    """Equation index of every node; boundary nodes are eliminated (``-1``)."""
    idx = np.indices((cells + 1,) * dim).reshape(dim, -1)
    interior = np.all((idx > 0) & (idx < cells), axis=0)
    dof = np.full(interior.size, -1, dtype=np.int64)
    dof[interior] = np.arange(np.count_nonzero(interior))
    return dof


@_frozen_cache
def periodic_dof_map(dim: int, cells: int) -> np.ndarray:
    """Equation index of every node with opposite faces identified; ``cells**dim`` equations."""
    idx = np.indices((cells + 1,) * dim).reshape(dim, -1) % cells
    return np.ravel_multi_index(tuple(idx), (cells,) * dim).astype(np.int64)


def dof_map(dim: int, cells: int, bc: str) -> np.ndarray:
    if bc == DIRICHLET:
        return dirichlet_dof_map(dim, cells)
    if bc == PERIODIC:
        return periodic_dof_map(dim, cells)
    raise ContractError(f"unknown boundary condition {bc!r}, expected one of {_BCS}")


@_frozen_cache
def node_weights(dim: int, cells: int) -> np.ndarray:
    """Trapezoid (lumped mass) weight of every node, flat."""
    w1 = np.full(cells + 1, 1.0 / cells)
    w1[[0, -1]] *= 0.5
    w = w1
    for _ in range(dim - 1):
        w = np.multiply.outer(w, w1)
    return w.ravel()


@dataclass(frozen=True)
class GridField:
    """Nodal Q1 field on the unit square/cube.

    ``values`` has the node-grid shape ``(cells+1,)*dim``. For periodic
    fields the duplicated face nodes carry equal values.
    """

    values: np.ndarray
    bc: str = DIRICHLET

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def cells(self) -> int:
        return self.values.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.cells

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def mean(self) -> float:
        """Mean over the domain (periodic nodes counted once)."""
        if self.bc == PERIODIC:
            inner = self.values[(slice(0, -1),) * self.dim]
            return float(inner.mean())
        return float(node_weights(self.dim, self.cells) @ self.flat())

    def l2_norm(self) -> float:
        """Nodal-quadrature L2 norm."""
        u = self.flat()
        return float(np.sqrt(node_weights(self.dim, self.cells) @ (u * u)))

    def gauss_gradients(self) -> np.ndarray:
        return cell_gradients(self.flat(), self.dim, self.cells, where="gauss")

    def h1_seminorm(self) -> float:
        """``||grad u||_L2``, exact for the Q1 field."""
        return broken_l2_norm(self.gauss_gradients(), self.dim, self.cells)


def cell_gradients(u, dim: int, cells: int, where: str = "gauss") -> np.ndarray:
    """Gradients of a nodal field per cell.

    ``where="gauss"`` gives ``(ncells, Q, dim)`` at the Gauss points,
    ``where="mid"`` gives ``(ncells, dim)`` at cell centres.
    """
    ref = reference_element(dim)
    u = np.asarray(u, dtype=float).ravel()
    local = u[connectivity(dim, cells)]
    if where == "gauss":
        return cells * np.einsum("ca,qad->cqd", local, ref.grads)
    if where == "mid":
        return cells * local @ ref.mid_grads
    raise ValueError(f"where must be 'gauss' or 'mid', got {where!r}")


def broken_l2_norm(gauss_vectors: np.ndarray, dim: int, cells: int) -> float:
    """L2 norm of a per-cell vector field given at Gauss points ``(ncells, Q, dim)``."""
    w = reference_element(dim).weights * (1.0 / cells) ** dim
    return float(np.sqrt(np.einsum("q,cqd,cqd->", w, gauss_vectors, gauss_vectors)))


@dataclass(frozen=True)
class SparseSystem:
    """Symmetric sparse matrix, right-hand side and node-to-equation map.

    ``dofmap[node]`` is the equation index or ``-1`` for eliminated
    (Dirichlet) nodes.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: np.ndarray
    dim: int
    cells: int
    bc: str

    @property
    def n_eq(self) -> int:
        return self.matrix.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.cells

    def with_rhs(self, rhs) -> "SparseSystem":
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.n_eq,):
            raise ContractError(f"rhs has shape {rhs.shape}, expected ({self.n_eq},)")
        return SparseSystem(self.matrix, rhs, self.dofmap, self.dim, self.cells, self.bc)

    def weights(self) -> np.ndarray:
        """Measure attached to each equation (sum of its nodes' trapezoid weights)."""
        nw = node_weights(self.dim, self.cells)
        keep = self.dofmap >= 0
        return np.bincount(self.dofmap[keep], weights=nw[keep], minlength=self.n_eq)

    def expand(self, x) -> GridField:
        """Nodal field from an equation-space vector; eliminated nodes get 0."""
        x = np.asarray(x, dtype=float)
        vals = np.zeros(self.dofmap.size)
        keep = self.dofmap >= 0
        vals[keep] = x[self.dofmap[keep]]
        return GridField(vals.reshape((self.cells + 1,) * self.dim), self.bc)

    def restrict(self, field: GridField) -> np.ndarray:
        """Equation-space vector of a nodal field (inverse of :meth:`expand`)."""
        x = np.zeros(self.n_eq)
        keep = self.dofmap >= 0
        x[self.dofmap[keep]] = field.flat()[keep]
        return x


def _check_coeffs(coeffs) -> None:
    if not isinstance(coeffs, CoefficientSet):
        raise ContractError("coefficients must be a validated CoefficientSet")


def cell_tensors(domain: TiledDomain, coeffs: CoefficientSet) -> np.ndarray:
    """Conductivity sampled at each cell midpoint, shape ``(ncells, dim, dim)``."""
    _check_coeffs(coeffs)
    if coeffs.dim != domain.dim:
        raise ContractError(f"coefficients are {coeffs.dim}D, domain is {domain.dim}D")
    labels = domain.labels.ravel()
    if coeffs.constant_tensors:
        return coeffs.tensor_at(labels, np.zeros((labels.size, domain.dim)))
    y = domain.local_coords(domain.cell_midpoints().reshape(-1, domain.dim))
    return coeffs.tensor_at(labels, y)


def stiffness_matrix(tensors: np.ndarray, dim: int, cells: int, dofmap: np.ndarray, n_eq: int) -> sp.csr_matrix:
    """Assemble ``int A grad phi_j . grad phi_i`` for per-cell constant tensors."""
    ref = reference_element(dim)
    h = 1.0 / cells
    ke = h ** (dim - 2) * np.einsum("cde,deab->cab", tensors, ref.stiffness)
    ke = 0.5 * (ke + np.swapaxes(ke, 1, 2))
    eq = dofmap[connectivity(dim, cells)]
    rows = np.repeat(eq, eq.shape[1], axis=1).ravel()
    cols = np.tile(eq, (1, eq.shape[1])).ravel()
    data = ke.ravel()
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix((data[keep], (rows[keep], cols[keep])), shape=(n_eq, n_eq)).tocsr()
    mat.sum_duplicates()
    return mat


def lumped_load(cell_values: np.ndarray, dim: int, cells: int, dofmap: np.ndarray, n_eq: int) -> np.ndarray:
    share = np.asarray(cell_values, dtype=float).ravel() * (1.0 / cells) ** dim / 2**dim
    eq = dofmap[connectivity(dim, cells)]
    vals = np.repeat(share[:, None], eq.shape[1], axis=1)
    keep = eq >= 0
    return np.bincount(eq[keep], weights=vals[keep], minlength=n_eq)


def assemble_stiffness(domain: TiledDomain, coeffs: CoefficientSet, bc: str = DIRICHLET) -> SparseSystem:
    """Stiffness matrix of ``-div(A grad u)`` with ``A`` sampled per cell; zero rhs."""
    dmap = dof_map(domain.dim, domain.cells, bc)
    n_eq = int(dmap.max()) + 1
    mat = stiffness_matrix(cell_tensors(domain, coeffs), domain.dim, domain.cells, dmap, n_eq)
    return SparseSystem(mat, np.zeros(n_eq), dmap, domain.dim, domain.cells, bc)


def assemble_volume_load(domain: TiledDomain, coeffs: CoefficientSet, bc: str = DIRICHLET) -> np.ndarray:
    """Lumped ``int f^eps phi_i`` with the phase source sampled at cell midpoints."""
    _check_coeffs(coeffs)
    dmap = dof_map(domain.dim, domain.cells, bc)
    x = domain.cell_midpoints().reshape(-1, domain.dim)
    f = coeffs.source_at(domain.labels.ravel(), x)
    return lumped_load(f, domain.dim, domain.cells, dmap, int(dmap.max()) + 1)


def interface_weights(domain: TiledDomain, coeffs: CoefficientSet) -> np.ndarray:
    """``eps * gamma(y) * |facet|`` for every interface facet, ``y`` the facet midpoint in cell coordinates."""
    _check_coeffs(coeffs)
    facets = domain.facets
    if len(facets) == 0:
        return np.zeros(0)
    y = domain.local_coords(facets.midpoints)
    return domain.eps * coeffs.gamma_at(y) * facets.facet_measure


def assemble_interface_load(domain: TiledDomain, coeffs: CoefficientSet, bc: str = DIRICHLET) -> np.ndarray:
    """Lumped ``int_{Sigma^eps} gamma^eps phi_i ds``; each facet splits equally among its corners."""
    dmap = dof_map(domain.dim, domain.cells, bc)
    n_eq = int(dmap.max()) + 1
    wf = interface_weights(domain, coeffs)
    if wf.size == 0:
        return np.zeros(n_eq)
    nodes = domain.facets.nodes
    eq = dmap[nodes]
    if bc == DIRICHLET and np.any(eq < 0):
        raise ContractError("interface facet touches the Dirichlet boundary")
    vals = np.repeat((wf / nodes.shape[1])[:, None], nodes.shape[1], axis=1)
    return np.bincount(eq.ravel(), weights=vals.ravel(), minlength=n_eq)


def energy_gap(matrix, rhs, x) -> float:
    """Relative mismatch ``|x.Kx - b.x| / max(|x.Kx|, |b.x|)``; 0 when both vanish."""
    xkx = float(x @ (matrix @ x))
    bx = float(rhs @ x)
    scale = max(abs(xkx), abs(bx))
    if scale == 0.0:
        return 0.0
    return abs(xkx - bx) / scale
