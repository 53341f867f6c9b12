import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from perihom.errors import ConfigError, ContractError, ConvergenceError, DomainError
from perihom.linalg import SolverOptions, cg_solve, check_symmetric, zero_mean_project


def laplacian_1d(n, periodic=False):
    k = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="lil")
    if periodic:
        k[0, n - 1] = k[n - 1, 0] = -1
    return k.tocsr()


def test_two_by_two():
    res = cg_solve(np.array([[2.0, -1.0], [-1.0, 2.0]]), [1.0, 1.0])
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-12)
    assert res.iterations <= 2


def test_identity_converges_in_one_iteration():
    b = np.arange(1.0, 8.0)
    res = cg_solve(sp.identity(7), b)
    assert res.iterations == 1
    np.testing.assert_allclose(res.x, b)


def test_zero_rhs():
    res = cg_solve(laplacian_1d(5), np.zeros(5))
    assert res.iterations == 0 and not np.any(res.x)


@pytest.mark.parametrize("precond", ["none", "jacobi"])
def test_matches_dense_lu(precond):
    n = 40
    k = laplacian_1d(n) + sp.diags(np.linspace(0.0, 3.0, n))
    b = np.sin(np.arange(n))
    ref = scipy.linalg.lu_solve(scipy.linalg.lu_factor(k.toarray()), b)
    res = cg_solve(k, b, SolverOptions(tol=1e-12, precond=precond))
    np.testing.assert_allclose(res.x, ref, rtol=1e-9, atol=1e-10)
    assert res.residual <= 1e-12
    np.testing.assert_allclose(np.linalg.norm(k @ res.x - b) / np.linalg.norm(b), res.residual)


def test_budget_exhaustion_raises():
    with pytest.raises(ConvergenceError) as err:
        cg_solve(laplacian_1d(200), np.ones(200), SolverOptions(tol=1e-12, max_iter=3))
    assert err.value.iterations == 3
    assert err.value.residual > 1e-12


def test_asymmetric_matrix_is_rejected():
    with pytest.raises(ContractError):
        cg_solve(np.array([[2.0, 1.0], [0.0, 2.0]]), [1.0, 1.0])
    with pytest.raises(ContractError):
        check_symmetric(sp.csr_matrix(np.array([[1.0, 1e-3], [0.0, 1.0]])))
    check_symmetric(sp.csr_matrix(np.eye(3)))


@pytest.mark.parametrize(
    "kwargs, key",
    [(dict(tol=0.0), "tol"), (dict(tol=1.5), "tol"), (dict(max_iter=-1), "max_iter"),
     (dict(precond="ilu"), "precond"), (dict(nullspace="rigid"), "nullspace")],
)
def test_option_validation(kwargs, key):
    with pytest.raises(ConfigError) as err:
        SolverOptions(**kwargs)
    assert err.value.key == key


def test_zero_mean_project_examples():
    np.testing.assert_allclose(zero_mean_project([1.0, 2.0, 3.0]), [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(zero_mean_project([1.0, 3.0], [3.0, 1.0]), [-0.5, 1.5])
    for w in ([1.0], [-1.0, 2.0], [0.0, 0.0]):
        with pytest.raises(DomainError):
            zero_mean_project([1.0, 2.0], w)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=30), st.integers(0, 2**31))
def test_periodic_solution_has_zero_weighted_mean(rhs, seed):
    n = len(rhs)
    w = np.random.default_rng(seed).uniform(0.5, 2.0, n)
    k = laplacian_1d(n, periodic=True)
    res = cg_solve(k, rhs, SolverOptions(tol=1e-11, nullspace="constants"), weights=w)
    assert abs(w @ res.x) <= 1e-9 * (1 + np.abs(res.x).max()) * w.sum()
    b = zero_mean_project(np.asarray(rhs))
    assert np.linalg.norm(k @ res.x - b) <= 1e-10 * max(np.linalg.norm(b), 1e-300) + 1e-12


def test_periodic_solution_is_unique_under_normalisation():
    n = 24
    k = laplacian_1d(n, periodic=True)
    b = np.cos(2 * np.pi * np.arange(n) / n)
    opts = SolverOptions(tol=1e-12, nullspace="constants")
    a = cg_solve(k, b, opts).x
    shifted = cg_solve(k, b, opts, x0=a + 5.0).x
    np.testing.assert_allclose(shifted, a, atol=1e-10)
    # oracle: pseudo-inverse of the singular matrix gives the minimum-norm, i.e. zero-mean, solution
    np.testing.assert_allclose(a, np.linalg.pinv(k.toarray()) @ b, atol=1e-10)


def test_converged_initial_guess_returns_immediately():
    k = laplacian_1d(10)
    b = np.ones(10)
    x = cg_solve(k, b, SolverOptions(tol=1e-12)).x
    res = cg_solve(k, b, SolverOptions(tol=1e-8), x0=x)
    assert res.iterations == 0
