import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from perihom.coefficients import CoefficientSet, Expression, as_source, sym_eigvalsh
from perihom.errors import ConfigError, ContractError

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@settings(max_examples=100, deadline=None)
@given(arrays(float, (2, 2), elements=finite))
def test_closed_form_eigenvalues_2x2(a):
    a = 0.5 * (a + a.T)
    np.testing.assert_allclose(sym_eigvalsh(a), np.linalg.eigvalsh(a), atol=1e-10 * (1 + np.abs(a).max()))


@settings(max_examples=100, deadline=None)
@given(arrays(float, (3, 3), elements=finite))
def test_closed_form_eigenvalues_3x3(a):
    a = 0.5 * (a + a.T)
    np.testing.assert_allclose(sym_eigvalsh(a), np.linalg.eigvalsh(a), atol=1e-8 * (1 + np.abs(a).max()))


def test_eigenvalues_of_multiples_of_identity():
    np.testing.assert_array_equal(sym_eigvalsh(4.0 * np.eye(2)), [4.0, 4.0])
    np.testing.assert_allclose(sym_eigvalsh(3.0 * np.eye(3)), [3.0, 3.0, 3.0])


@pytest.mark.parametrize(
    "text, x, value",
    [
        ("const:2.5", (0.3, 0.7), 2.5),
        ("sinpi2", (0.5, 0.5), 2 * np.pi**2),
        ("poly:1,2,3", (0.5, 0.25), 1 + 1.0 + 0.75),
    ],
)
def test_expression_values(text, x, value):
    assert Expression(text)(np.array(x)) == pytest.approx(value)


@pytest.mark.parametrize("text", ["const:1.5", "sinpi2", "poly:1,-2,3"])
def test_expression_integrals_match_quadrature(text):
    e = Expression(text)
    ref, _ = integrate.dblquad(lambda y, x: float(e(np.array([x, y]))), 0, 1, 0, 1)
    assert e.integral() == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("text", ["const", "const:1,2", "sin", "poly:1,2", "poly:a,b,c", "const:nan"])
def test_bad_expressions(text):
    with pytest.raises(ConfigError):
        Expression(text)


def test_as_source():
    assert as_source(2)(np.zeros(2)) == 2.0
    assert as_source("sinpi2") == Expression("sinpi2")
    with pytest.raises(ConfigError):
        as_source([1, 2])


def test_coefficient_validation():
    c = CoefficientSet(np.eye(2), [[2.0, 0.5], [0.5, 1.0]], gamma=1.0, f1="const:1", f2=3)
    assert c.dim == 2
    assert c.ellipticity == pytest.approx(min(1.0, sym_eigvalsh(np.array([[2.0, 0.5], [0.5, 1.0]]))[0]))
    assert c.f2(np.array([0.1, 0.1])) == 3.0


@pytest.mark.parametrize(
    "kwargs, key",
    [
        (dict(A1=[[1.0, 0.0], [0.0, -1.0]], A2=np.eye(2)), "A1"),
        (dict(A1=np.eye(2), A2=[[1.0, 2.0], [0.0, 1.0]]), "A2"),
        (dict(A1=np.eye(2), A2=np.eye(3)), "A2"),
        (dict(A1=np.eye(2), A2=np.eye(2), gamma=-1.0), "gamma"),
        (dict(A1=np.eye(2), A2=np.eye(2), f1=lambda x: np.full(x.shape[:-1], np.inf)), "f1"),
    ],
)
def test_invalid_coefficients_are_rejected(kwargs, key):
    with pytest.raises(ConfigError) as err:
        CoefficientSet(**kwargs)
    assert err.value.key == key


def test_function_valued_tensor():
    def layered(y):
        a = np.where(y[..., 0] < 0.5, 1.0, 4.0)
        return a[..., None, None] * np.eye(2)

    c = CoefficientSet(layered, layered, dim=2)
    t = c.tensor_at(np.array([1, 1]), np.array([[0.25, 0.5], [0.75, 0.5]]))
    np.testing.assert_array_equal(t[:, 0, 0], [1.0, 4.0])
    with pytest.raises(ConfigError):
        CoefficientSet(layered, layered)


def test_scaled():
    c = CoefficientSet(np.eye(2), 10 * np.eye(2), 1.0)
    s = c.scaled(2.0)
    np.testing.assert_array_equal(s.A2, 20 * np.eye(2))
    assert s.gamma == 1.0
    with pytest.raises(ContractError):
        c.scaled(0.0)
