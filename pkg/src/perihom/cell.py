"""Periodic cell problems, homogenized conductivity and effective source."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientSet, sym_eigvalsh
from .errors import ContractError
from .fem import (
    PERIODIC,
    GridField,
    SparseSystem,
    assemble_stiffness,
    cell_gradients,
    cell_tensors,
    connectivity,
    energy_gap,
    reference_element,
)
from .geometry import CellGeometry, cell_domain, interface_facets
from .linalg import SolverOptions, solve_system


@dataclass(frozen=True)
class CellSolve:
    corrector: GridField
    iterations: int
    residual: float
    energy_gap: float


@dataclass(frozen=True)
class HomogenizedData:
    """Correctors, homogenized tensor and the ingredients of the effective source."""

    correctors: tuple
    A_hom: np.ndarray
    I_gamma: float
    vol_frac: tuple
    m: int
    solves: tuple = field(default=(), repr=False)

    @property
    def dim(self) -> int:
        return self.A_hom.shape[0]

    def eigenvalues(self) -> np.ndarray:
        sym = 0.5 * (self.A_hom + self.A_hom.T)
        return sym_eigvalsh(sym)

    def asymmetry(self) -> float:
        return float(np.abs(self.A_hom - self.A_hom.T).max())

    def to_json(self) -> dict:
        return {
            "A_hom": self.A_hom.tolist(),
            "I_gamma": self.I_gamma,
            "vol_frac": list(self.vol_frac),
            "m": self.m,
        }


def cell_rhs(system: SparseSystem, tensors: np.ndarray, j: int) -> np.ndarray:
    """``-int_Y A e_j . grad phi_i`` for every periodic equation ``i``."""
    dim, cells = system.dim, system.cells
    ref = reference_element(dim)
    h = 1.0 / cells
    local = -(h ** (dim - 1)) * np.einsum("ad,cd->ca", ref.grad_integrals, tensors[:, :, j])
    eq = system.dofmap[connectivity(dim, cells)]
    return np.bincount(eq.ravel(), weights=local.ravel(), minlength=system.n_eq)


def solve_cell_problems(geom: CellGeometry, coeffs: CoefficientSet, m: int | None = None,
                        opts: SolverOptions = SolverOptions(), workers: int = 1) -> tuple:
    """Correctors ``omega_j``, ``j = 1..dim``: zero-mean periodic solutions of
    ``-div_y(A (grad_y omega_j + e_j)) = 0`` on the whole cell.

    Returns one :class:`CellSolve` per direction.
    """
    domain = cell_domain(geom, m)
    system = assemble_stiffness(domain, coeffs, PERIODIC)
    tensors = cell_tensors(domain, coeffs)

    def solve(j):
        sysj = system.with_rhs(cell_rhs(system, tensors, j))
        res = solve_system(sysj, opts)
        gap = energy_gap(sysj.matrix, sysj.rhs, res.x)
        return CellSolve(sysj.expand(res.x), res.iterations, res.residual, gap)

    directions = range(geom.dim)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return tuple(pool.map(solve, directions))
    return tuple(solve(j) for j in directions)


def homogenized_tensor(geom: CellGeometry, coeffs: CoefficientSet, correctors, m: int | None = None) -> np.ndarray:
    """``a_ij = int_Y A (grad omega_i + e_i) . (grad omega_j + e_j) dy`` by Gauss quadrature."""
    domain = cell_domain(geom, m)
    dim, cells = domain.dim, domain.cells
    fields = [c.corrector if isinstance(c, CellSolve) else c for c in correctors]
    if len(fields) != dim:
        raise ContractError(f"expected {dim} correctors, got {len(fields)}")
    for f in fields:
        if f.cells != cells or f.dim != dim:
            raise ContractError(f"corrector grid ({f.cells} cells, {f.dim}D) does not match m={cells}")
    tensors = cell_tensors(domain, coeffs)
    ref = reference_element(dim)
    w = ref.weights * (1.0 / cells) ** dim
    eye = np.eye(dim)
    v = [cell_gradients(f.flat(), dim, cells) + eye[i] for i, f in enumerate(fields)]
    flux = [np.einsum("cde,cqe->cqd", tensors, vi) for vi in v]
    a = np.empty((dim, dim))
    for i in range(dim):
        for j in range(dim):
            a[i, j] = np.einsum("q,cqd,cqd->", w, flux[i], v[j])
    return a


def interface_integral(geom: CellGeometry, coeffs: CoefficientSet, m: int | None = None) -> float:
    """``int_Sigma gamma ds`` by facet-midpoint quadrature (exact for constant gamma)."""
    m = geom.m if m is None else m
    facets = interface_facets(geom, m)
    if len(facets) == 0:
        return 0.0
    return float(np.sum(coeffs.gamma_at(facets.midpoints)) * facets.facet_measure)


def effective_source(geom: CellGeometry, coeffs: CoefficientSet, x, i_gamma: float | None = None):
    """``F(x) = |Y1| f1(x) + |Y2| f2(x) + int_Sigma gamma ds``; ``x`` may be a batch ``(..., dim)``."""
    if i_gamma is None:
        i_gamma = interface_integral(geom, coeffs)
    v1, v2 = geom.volume_fractions
    x = np.asarray(x, dtype=float)
    out = v1 * np.asarray(coeffs.f1(x)) + v2 * np.asarray(coeffs.f2(x)) + i_gamma
    return float(out) if out.ndim == 0 else out


class EffectiveSource:
    """``F`` as a callable of ``x``, for the macro solver."""

    def __init__(self, geom: CellGeometry, coeffs: CoefficientSet, i_gamma: float):
        self.geom, self.coeffs, self.i_gamma = geom, coeffs, i_gamma

    def __call__(self, x):
        return effective_source(self.geom, self.coeffs, x, self.i_gamma)

    def integral(self) -> float:
        v1, v2 = self.geom.volume_fractions
        return v1 * self.coeffs.f1.integral() + v2 * self.coeffs.f2.integral() + self.i_gamma


def homogenize(geom: CellGeometry, coeffs: CoefficientSet, m: int | None = None,
               opts: SolverOptions = SolverOptions(), workers: int = 1) -> HomogenizedData:
    """Solve the cell problems and collect everything the macro problem needs."""
    m = geom.m if m is None else m
    solves = solve_cell_problems(geom, coeffs, m, opts, workers)
    a_hom = homogenized_tensor(geom, coeffs, solves, m)
    return HomogenizedData(
        correctors=tuple(s.corrector for s in solves),
        A_hom=a_hom,
        I_gamma=interface_integral(geom, coeffs, m),
        vol_frac=geom.volume_fractions,
        m=m,
        solves=solves,
    )
