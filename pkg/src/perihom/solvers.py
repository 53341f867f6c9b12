"""Micro (eps-scale transmission) and macro (homogenized) Dirichlet problems."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .cell import HomogenizedData
from .coefficients import CoefficientSet
from .errors import ContractError, DomainError
from .fem import (
    DIRICHLET,
    PERIODIC,
    GridField,
    assemble_interface_load,
    assemble_stiffness,
    assemble_volume_load,
    broken_l2_norm,
    cell_gradients,
    cell_tensors,
    connectivity,
    energy_gap,
)
from .geometry import DEFAULT_MAX_NODES, CellGeometry, TiledDomain, tile, uniform_domain
from .linalg import SolverOptions, solve_system


@dataclass(frozen=True)
class MicroSolution:
    eps: float
    h: float
    field: GridField
    flux: np.ndarray        # (ncells, dim), A^eps grad u^eps at cell centres
    h1_norm: float
    l2_norm: float
    iterations: int
    residual: float
    energy_gap: float
    domain: TiledDomain

    @property
    def n(self) -> int:
        return self.domain.n

    def summary(self) -> dict:
        return {
            "eps": self.eps,
            "h": self.h,
            "h1_norm": self.h1_norm,
            "l2_norm": self.l2_norm,
            "iters": self.iterations,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class MacroSolution:
    field: GridField
    A_hom: np.ndarray
    F: object
    iterations: int
    residual: float
    energy_gap: float

    @property
    def h(self) -> float:
        return self.field.h

    def summary(self) -> dict:
        return {
            "h": self.h,
            "h1_norm": self.field.h1_seminorm(),
            "l2_norm": self.field.l2_norm(),
            "iters": self.iterations,
            "residual": self.residual,
            "A_hom": np.asarray(self.A_hom).tolist(),
        }


def parse_eps(value) -> int:
    """Number of tiles ``n`` for ``eps = 1/n``; accepts ``"1/8"``, ``0.125`` or a Fraction."""
    try:
        frac = Fraction(value) if not isinstance(value, float) else Fraction(value).limit_denominator(10**6)
    except (ValueError, ZeroDivisionError):
        raise DomainError(f"cannot parse eps={value!r}") from None
    if frac <= 0 or frac.numerator != 1:
        raise DomainError(f"eps must be 1/n for a positive integer n, got {value!r}")
    if isinstance(value, float) and abs(1.0 / frac.denominator - value) > 1e-12:
        raise DomainError(f"eps must be 1/n for a positive integer n, got {value!r}")
    return frac.denominator


def compute_flux(field: GridField, conductivity, domain: TiledDomain | None = None) -> np.ndarray:
    """Per-cell flux ``A grad u`` at cell centres, shape ``(ncells, dim)``.

    ``conductivity`` is a :class:`CoefficientSet` (needs ``domain``), one
    constant tensor, or per-cell tensors ``(ncells, dim, dim)``.
    """
    grad = cell_gradients(field.flat(), field.dim, field.cells, where="mid")
    if isinstance(conductivity, CoefficientSet):
        if domain is None:
            raise ContractError("a domain is needed to sample phase-wise coefficients")
        tensors = cell_tensors(domain, conductivity)
        return np.einsum("cde,ce->cd", tensors, grad)
    a = np.asarray(conductivity, dtype=float)
    if a.ndim == 2:
        return grad @ a.T
    return np.einsum("cde,ce->cd", a, grad)


def solve_micro(geom: CellGeometry, coeffs: CoefficientSet, n: int, m: int | None = None,
                opts: SolverOptions = SolverOptions(), max_nodes: int = DEFAULT_MAX_NODES) -> MicroSolution:
    """Solve ``int A^eps grad u . grad v = int f^eps v + int_{Sigma^eps} gamma^eps v`` with ``u = 0`` on the boundary."""
    domain = tile(geom, n, m, max_nodes=max_nodes)
    system = assemble_stiffness(domain, coeffs, DIRICHLET)
    rhs = assemble_volume_load(domain, coeffs) + assemble_interface_load(domain, coeffs)
    system = system.with_rhs(rhs)
    res = solve_system(system, opts)
    field = system.expand(res.x)
    return MicroSolution(
        eps=domain.eps,
        h=domain.h,
        field=field,
        flux=compute_flux(field, coeffs, domain),
        h1_norm=field.h1_seminorm(),
        l2_norm=field.l2_norm(),
        iterations=res.iterations,
        residual=res.residual,
        energy_gap=energy_gap(system.matrix, system.rhs, res.x),
        domain=domain,
    )


def solve_macro(A_hom, F, cells: int, opts: SolverOptions = SolverOptions(), dim: int | None = None,
                max_nodes: int = DEFAULT_MAX_NODES) -> MacroSolution:
    """Solve ``-div(A_hom grad u) = F`` with ``u = 0`` on the boundary on a ``cells``-per-side grid.

    ``F`` is a number, a catalog expression or a callable of ``x``.
    """
    a = np.asarray(A_hom, dtype=float)
    dim = a.shape[0] if dim is None else dim
    coeffs = CoefficientSet(a, a, 0.0, F, F, dim)
    domain = uniform_domain(dim, cells, max_nodes=max_nodes)
    system = assemble_stiffness(domain, coeffs, DIRICHLET)
    system = system.with_rhs(assemble_volume_load(domain, coeffs))
    res = solve_system(system, opts)
    return MacroSolution(
        field=system.expand(res.x),
        A_hom=a,
        F=coeffs.f1,
        iterations=res.iterations,
        residual=res.residual,
        energy_gap=energy_gap(system.matrix, system.rhs, res.x),
    )


def _nodal_gradient(field: GridField) -> np.ndarray:
    """Average of the adjacent cells' centre gradients at every node, ``(nnodes, dim)``."""
    dim, cells = field.dim, field.cells
    grad = cell_gradients(field.flat(), dim, cells, where="mid")
    conn = connectivity(dim, cells)
    nn = (cells + 1) ** dim
    count = np.bincount(conn.ravel(), minlength=nn)
    out = np.empty((nn, dim))
    for d in range(dim):
        out[:, d] = np.bincount(conn.ravel(), weights=np.repeat(grad[:, d], conn.shape[1]), minlength=nn)
    return out / count[:, None]


def sample_periodic(field: GridField, y) -> np.ndarray:
    """Multilinear interpolation of a periodic cell field at cell coordinates ``y`` in ``[0, 1)``."""
    axes = [np.linspace(0.0, 1.0, field.cells + 1)] * field.dim
    interp = RegularGridInterpolator(axes, field.values, method="linear")
    y = np.asarray(y, dtype=float)
    return interp(np.clip(y, 0.0, 1.0))


def _corrector_on_grid(corrector: GridField, n: int, cells: int) -> np.ndarray:
    """Corrector values at the macro nodes ``x``, evaluated at ``frac(n x)``; flat."""
    dim = corrector.dim
    if cells % n == 0 and cells // n == corrector.cells:
        idx = np.indices((cells + 1,) * dim) % corrector.cells
        return corrector.values[tuple(idx)].ravel()
    x = np.stack(np.meshgrid(*([np.linspace(0.0, 1.0, cells + 1)] * dim), indexing="ij"), axis=-1)
    y = x.reshape(-1, dim) * n
    return sample_periodic(corrector, y - np.floor(y))


def corrector_reconstruct(macro: MacroSolution | GridField, hom: HomogenizedData, eps) -> GridField:
    """First-order two-scale approximation ``u(x) + eps * sum_j d_j u(x) omega_j(x/eps)``.

    ``d_j u`` at a node is the average of the adjacent cells' centre gradients.
    """
    field = macro.field if isinstance(macro, MacroSolution) else macro
    n = parse_eps(eps)
    grad = _nodal_gradient(field)
    vals = field.flat().copy()
    for j, omega in enumerate(hom.correctors):
        vals += (1.0 / n) * grad[:, j] * _corrector_on_grid(omega, n, field.cells)
    return GridField(vals.reshape(field.values.shape), field.bc)


def corrector_gradient(macro: MacroSolution | GridField, hom: HomogenizedData, n: int) -> np.ndarray:
    """Broken gradient of the reconstruction with a cell-wise constant macro gradient.

    Returns ``grad u + sum_j (d_j u)_cell grad_y omega_j(x/eps)`` at the Gauss
    points, shape ``(ncells, Q, dim)``. The macro grid must have ``hom.m``
    cells per tile.
    """
    field = macro.field if isinstance(macro, MacroSolution) else macro
    dim, cells = field.dim, field.cells
    m = hom.m
    if cells != n * m:
        raise ContractError(f"macro grid of {cells} cells is not {n} tiles of {m} cells")
    g_gauss = cell_gradients(field.flat(), dim, cells, where="gauss")
    g_mid = cell_gradients(field.flat(), dim, cells, where="mid")
    # cell index inside its tile, flat in the corrector grid
    k = np.indices((cells,) * dim).reshape(dim, -1) % m
    local = np.ravel_multi_index(tuple(k), (m,) * dim)
    out = g_gauss.copy()
    for j, omega in enumerate(hom.correctors):
        dy = cell_gradients(omega.flat(), dim, m, where="gauss")[local]
        out += g_mid[:, j, None, None] * dy
    return out


def broken_h1_errors(micro: MicroSolution, macro: MacroSolution, hom: HomogenizedData) -> tuple:
    """``(||grad(u^eps - u)||, ||grad u^eps - grad_broken(reconstruction)||)`` on the micro grid."""
    if macro.field.cells != micro.field.cells:
        raise ContractError("micro and macro solutions must share a grid")
    dim, cells = micro.field.dim, micro.field.cells
    gu_eps = micro.field.gauss_gradients()
    plain = broken_l2_norm(gu_eps - macro.field.gauss_gradients(), dim, cells)
    corr = broken_l2_norm(gu_eps - corrector_gradient(macro, hom, micro.n), dim, cells)
    return plain, corr

