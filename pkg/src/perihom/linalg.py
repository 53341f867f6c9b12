"""Preconditioned conjugate gradients for the assembled systems.

Singular periodic systems are handled by keeping every iterate and search
direction in the weighted zero-mean subspace.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ContractError, ConvergenceError, DomainError

PRECONDITIONERS = ("none", "jacobi")
NULLSPACES = ("none", "constants")


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 0          # 0: 10 x number of unknowns
    precond: str = "jacobi"
    nullspace: str = "none"

    def __post_init__(self):
        if not (0.0 < self.tol < 1.0):
            raise ConfigError(f"tolerance must lie in (0, 1), got {self.tol!r}", key="tol")
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise ConfigError(f"max_iter must be a nonnegative integer, got {self.max_iter!r}", key="max_iter")
        if self.precond not in PRECONDITIONERS:
            raise ConfigError(f"unknown preconditioner {self.precond!r}", key="precond")
        if self.nullspace not in NULLSPACES:
            raise ConfigError(f"unknown nullspace {self.nullspace!r}", key="nullspace")

    def iteration_budget(self, n: int) -> int:
        return self.max_iter if self.max_iter > 0 else 10 * n

    def replace(self, **kwargs) -> "SolverOptions":
        values = dict(tol=self.tol, max_iter=self.max_iter, precond=self.precond, nullspace=self.nullspace)
        values.update(kwargs)
        return SolverOptions(**values)


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float     # ||K x - b|| / ||b||, recomputed from x


def zero_mean_project(v, weights=None) -> np.ndarray:
    """Remove the weighted mean: ``v - (w.v / sum(w))``."""
    v = np.asarray(v, dtype=float)
    if weights is None:
        return v - v.mean()
    w = np.asarray(weights, dtype=float)
    if w.shape != v.shape:
        raise DomainError(f"weights have shape {w.shape}, vector has {v.shape}")
    if np.any(w < 0):
        raise DomainError("weights must be nonnegative")
    total = w.sum()
    if total == 0.0:
        raise DomainError("weights are all zero")
    return v - (w @ v) / total


def check_symmetric(matrix, rtol: float = 1e-12) -> None:
    diff = abs(matrix - matrix.T)
    scale = abs(matrix).max() if matrix.nnz else 0.0
    if diff.nnz and diff.max() > rtol * scale:
        raise ContractError(f"matrix is not symmetric (max |K - K^T| = {diff.max():.3e})")


def cg_solve(matrix, rhs, opts: SolverOptions = SolverOptions(), weights=None, x0=None) -> SolveResult:
    """Solve ``K x = b`` for symmetric positive (semi)definite ``K``.

    With ``opts.nullspace == "constants"`` the right-hand side is made
    compatible (sum zero) and the solution normalised to zero weighted mean.
    Raises :class:`ConvergenceError` when the iteration budget runs out.
    """
    matrix = sp.csr_matrix(matrix)
    b = np.asarray(rhs, dtype=float)
    n = b.size
    if matrix.shape != (n, n):
        raise ContractError(f"matrix shape {matrix.shape} does not match rhs size {n}")
    check_symmetric(matrix)

    singular = opts.nullspace == "constants"
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if singular:
        b = zero_mean_project(b)

    def project(v):
        return zero_mean_project(v, w) if singular else v

    def residual(x):
        # the part of b outside range(K) is rounding noise; measure the rest
        return project_range(b - matrix @ x)

    def project_range(v):
        return zero_mean_project(v) if singular else v.copy()

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return SolveResult(np.zeros(n), 0, 0.0)
    x = np.zeros(n) if x0 is None else project(np.array(x0, dtype=float))

    if opts.precond == "jacobi":
        diag = matrix.diagonal()
        if np.any(diag <= 0):
            raise ContractError("Jacobi preconditioner needs a positive diagonal")
        inv_diag = 1.0 / diag
    else:
        inv_diag = None

    budget = opts.iteration_budget(n)
    target = opts.tol * bnorm
    r = residual(x) if x0 is not None else project_range(b)
    z = project(r * inv_diag if inv_diag is not None else r)
    p = z.copy()
    rz = r @ z
    it = 0
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return SolveResult(x, 0, rnorm / bnorm)
    while it < budget:
        q = matrix @ p
        pq = p @ q
        if not pq > 0.0:
            raise ConvergenceError("conjugate gradients broke down (p.Kp <= 0)", rnorm / bnorm, it)
        alpha = rz / pq
        x = project(x + alpha * p)
        r = project_range(r - alpha * q)
        it += 1
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            # confirm with the true residual; the recursive one may drift
            x = project(x)
            r = residual(x)
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                break
        z = project(r * inv_diag if inv_diag is not None else r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    else:
        raise ConvergenceError("conjugate gradients did not converge", rnorm / bnorm, it)
    return SolveResult(x, it, rnorm / bnorm)


def solve_system(system, opts: SolverOptions = SolverOptions()) -> SolveResult:
    """:func:`cg_solve` on a :class:`~perihom.fem.SparseSystem`, picking nullspace handling from its bc."""
    nullspace = "constants" if system.bc == "periodic" else "none"
    weights = system.weights() if nullspace == "constants" else None
    return cg_solve(system.matrix, system.rhs, opts.replace(nullspace=nullspace), weights=weights)
