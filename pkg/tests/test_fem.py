import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from perihom.coefficients import CoefficientSet
from perihom.errors import ContractError
from perihom.fem import (
    PERIODIC,
    assemble_interface_load,
    assemble_stiffness,
    assemble_volume_load,
    dirichlet_dof_map,
    energy_gap,
    periodic_dof_map,
    reference_element,
)
from perihom.geometry import CellGeometry, tile, uniform_domain
from perihom.linalg import solve_system

SQUARE = CellGeometry(2, (0.25, 0.25), (0.75, 0.75), m=8)
UNIT = CoefficientSet(np.eye(2), np.eye(2))


def _q1_element_oracle():
    """Element stiffness of the Laplacian on [0,1]^2 by symbolic integration."""
    x, y = sympy.symbols("x y")
    phis = [(1 - x) * (1 - y), (1 - x) * y, x * (1 - y), x * y]  # corner order (0,0),(0,1),(1,0),(1,1)
    k = sympy.zeros(4, 4)
    for a, pa in enumerate(phis):
        for b, pb in enumerate(phis):
            integrand = sympy.diff(pa, x) * sympy.diff(pb, x) + sympy.diff(pa, y) * sympy.diff(pb, y)
            k[a, b] = sympy.integrate(integrand, (x, 0, 1), (y, 0, 1))
    return np.array(k.tolist(), dtype=float)


def test_single_element_matches_symbolic_integration():
    oracle = _q1_element_oracle()
    assert oracle[0, 0] == pytest.approx(2 / 3)
    ref = reference_element(2)
    ke = np.einsum("de,deab->ab", np.eye(2), ref.stiffness)
    np.testing.assert_allclose(ke, oracle, atol=1e-15)
    # assembled without boundary conditions: one cell, periodic map would merge corners
    sysm = assemble_stiffness(uniform_domain(2, 1), UNIT, bc="dirichlet")
    assert sysm.n_eq == 0


def test_anisotropic_element_matches_symbolic_integration():
    x, y = sympy.symbols("x y")
    a = sympy.Matrix([[3, 1], [1, 2]])
    phis = [(1 - x) * (1 - y), (1 - x) * y, x * (1 - y), x * y]
    grads = [sympy.Matrix([sympy.diff(p, x), sympy.diff(p, y)]) for p in phis]
    oracle = np.array(
        [[float(sympy.integrate((a * gb).dot(ga), (x, 0, 1), (y, 0, 1))) for gb in grads] for ga in grads]
    )
    ke = np.einsum("de,deab->ab", np.array([[3.0, 1.0], [1.0, 2.0]]), reference_element(2).stiffness)
    np.testing.assert_allclose(ke, oracle, atol=1e-14)


def test_periodic_rows_sum_to_zero():
    sysm = assemble_stiffness(uniform_domain(2, 2), UNIT, bc=PERIODIC)
    assert sysm.n_eq == 4
    np.testing.assert_allclose(sysm.matrix @ np.ones(4), 0.0, atol=1e-15)


def test_dirichlet_laplacian_is_spd():
    k = assemble_stiffness(uniform_domain(2, 6), UNIT).matrix.toarray()
    np.testing.assert_array_equal(k, k.T)
    assert np.linalg.eigvalsh(k).min() > 0


def test_contrast_stiffness_exactly_symmetric():
    c = CoefficientSet(np.eye(2), [[7.0, 1.3], [1.3, 2.1]])
    k = assemble_stiffness(tile(SQUARE, 3), c).matrix
    assert abs(k - k.T).max() == 0.0
    kp = assemble_stiffness(tile(SQUARE, 1), c, PERIODIC).matrix
    assert abs(kp - kp.T).max() == 0.0
    np.testing.assert_allclose(kp @ np.ones(kp.shape[0]), 0.0, atol=1e-13)


def test_unvalidated_coefficients_rejected():
    with pytest.raises(ContractError):
        assemble_stiffness(uniform_domain(2, 2), {"A1": np.eye(2)})
    with pytest.raises(ContractError):
        assemble_stiffness(uniform_domain(2, 2), UNIT, bc="neumann")


@pytest.mark.parametrize("m, nodes, eqs", [(2, 9, 4), (1, 4, 1), (4, 25, 16)])
def test_periodic_dof_map_counts(m, nodes, eqs):
    dmap = periodic_dof_map(2, m)
    assert dmap.size == nodes
    assert len(np.unique(dmap)) == eqs
    grid = dmap.reshape(m + 1, m + 1)
    np.testing.assert_array_equal(grid[0], grid[-1])
    np.testing.assert_array_equal(grid[:, 0], grid[:, -1])


def test_dirichlet_dof_map():
    dmap = dirichlet_dof_map(2, 4).reshape(5, 5)
    assert np.all(dmap[[0, -1], :] == -1) and np.all(dmap[:, [0, -1]] == -1)
    np.testing.assert_array_equal(np.sort(dmap[1:-1, 1:-1].ravel()), np.arange(9))


def test_volume_load_unit_source_interior_node():
    cells = 8
    b = assemble_volume_load(uniform_domain(2, cells), CoefficientSet(np.eye(2), np.eye(2), 0, 1, 1))
    np.testing.assert_allclose(b, (1 / cells) ** 2, rtol=1e-14)


def test_volume_load_zero_inside_inclusion():
    dom = tile(SQUARE, 2)
    b = assemble_volume_load(dom, CoefficientSet(np.eye(2), np.eye(2), 0, 1, 0), PERIODIC)
    grid_b = b[periodic_dof_map(2, dom.cells)].reshape(dom.node_shape)
    # node (0.25, 0.25) is the centre of the first tile's inclusion
    assert grid_b[4, 4] == 0.0
    # node (0.125, 0.125) is a corner of it: one phase-2 cell out of four
    assert grid_b[2, 2] == pytest.approx(0.75 * dom.h**2)
    assert grid_b[0, 0] == pytest.approx(dom.h**2)


def test_volume_load_integrates_sinpi2():
    totals = []
    for cells in (16, 32, 64):
        b = assemble_volume_load(uniform_domain(2, cells), CoefficientSet(np.eye(2), np.eye(2), 0, "sinpi2", "sinpi2"), PERIODIC)
        totals.append(b.sum())
    errs = np.abs(np.array(totals) - 8.0)
    # leading term of the midpoint rule error for this integrand
    assert errs[-1] == pytest.approx(8.0 * np.pi**2 / (12 * 64**2), rel=1e-2)
    # midpoint rule: second order
    assert np.all(np.log2(errs[:-1] / errs[1:]) > 1.9)


@pytest.mark.parametrize("gamma, total", [(1.0, 2.0), (0.0, 0.0), (3.0, 6.0)])
def test_interface_load_totals(gamma, total):
    dom = tile(SQUARE, 8)
    b = assemble_interface_load(dom, CoefficientSet(np.eye(2), np.eye(2), gamma))
    assert b.sum() == total
    if gamma == 0.0:
        assert not np.any(b)


def test_interface_load_per_node():
    dom = tile(SQUARE, 1)
    b = assemble_interface_load(dom, CoefficientSet(np.eye(2), np.eye(2), 1.0))
    grid = b[dirichlet_dof_map(2, 8)].reshape(9, 9) * (dirichlet_dof_map(2, 8).reshape(9, 9) >= 0)
    h = 1 / 8
    # a corner of the box gets half of two facets, an edge node half of two facets, interior nothing
    assert grid[2, 2] == pytest.approx(h)
    assert grid[2, 4] == pytest.approx(h)
    assert grid[4, 4] == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(-6, 6), st.sampled_from(["sinpi2", "poly:1,2,-3", "const:0.7"]))
def test_load_linearity_power_of_two(k, f):
    alpha = 2.0**k
    dom = tile(SQUARE, 2)
    base = CoefficientSet(np.eye(2), 4 * np.eye(2), 1.5, f, "const:2")
    scaled = base.with_changes(f1=base.f1.scaled(alpha), f2=base.f2.scaled(alpha), gamma=alpha * 1.5)
    np.testing.assert_array_equal(assemble_volume_load(dom, scaled), alpha * assemble_volume_load(dom, base))
    np.testing.assert_array_equal(assemble_interface_load(dom, scaled), alpha * assemble_interface_load(dom, base))


def test_energy_identity_after_solve():
    c = CoefficientSet(np.eye(2), 10 * np.eye(2), 1.0, 1.0, 1.0)
    dom = tile(SQUARE, 2)
    sysm = assemble_stiffness(dom, c)
    sysm = sysm.with_rhs(assemble_volume_load(dom, c) + assemble_interface_load(dom, c))
    x = solve_system(sysm).x
    assert energy_gap(sysm.matrix, sysm.rhs, x) < 1e-8


def test_three_dimensional_assembly():
    dom = uniform_domain(3, 3)
    c = CoefficientSet(np.eye(3), np.eye(3))
    kp = assemble_stiffness(dom, c, PERIODIC).matrix
    assert kp.shape == (27, 27)
    np.testing.assert_allclose(kp @ np.ones(27), 0.0, atol=1e-14)
    k = assemble_stiffness(dom, c).matrix.toarray()
    assert np.linalg.eigvalsh(k).min() > 0
