from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perihom.errors import ConfigError, DomainError, ResourceError
from perihom.geometry import (
    CellGeometry,
    cell_domain,
    cell_labels,
    interface_facets,
    phase_indicator,
    tile,
)

SQUARE = CellGeometry(2, (0.25, 0.25), (0.75, 0.75), m=8)


@pytest.mark.parametrize("y, label", [((0.5, 0.5), 2), ((0.1, 0.1), 1), ((0.25, 0.5), 1), ((0.75, 0.75), 1)])
def test_phase_indicator_examples(y, label):
    assert phase_indicator(SQUARE, y) == label


@pytest.mark.parametrize("y", [(1.0, 0.5), (-0.1, 0.2), (0.5, 1.5)])
def test_phase_indicator_rejects_points_outside_cell(y):
    with pytest.raises(DomainError):
        phase_indicator(SQUARE, y)


def test_phase_indicator_batch_shape():
    y = np.random.default_rng(0).random((5, 7, 2))
    assert phase_indicator(SQUARE, y).shape == (5, 7)


@pytest.mark.parametrize(
    "lo, hi, m, count, measure",
    [
        ((0.25, 0.25), (0.75, 0.75), 8, 16, 2.0),
        ((0.25, 0.25), (0.75, 0.75), 4, 8, 2.0),
        ((0.3, 0.25), (0.7, 0.75), 20, 36, 1.8),
    ],
)
def test_interface_facets_examples(lo, hi, m, count, measure):
    geom = CellGeometry(2, lo, hi, m=m)
    facets = interface_facets(geom, m)
    assert len(facets) == count
    assert facets.facet_measure == pytest.approx(1.0 / m)
    assert facets.total_measure == pytest.approx(measure, abs=1e-14)
    assert facets.exact_total_measure == geom.exact_interface_measure()


def test_facet_normals_point_into_inclusion():
    facets = interface_facets(SQUARE, 8)
    centre = np.array([0.5, 0.5])
    # stepping along the normal from a facet midpoint enters Y2
    inside = facets.midpoints + 0.01 * facets.normals
    outside = facets.midpoints - 0.01 * facets.normals
    assert np.all(phase_indicator(SQUARE, inside) == 2)
    assert np.all(phase_indicator(SQUARE, outside) == 1)
    assert np.all(np.einsum("fd,fd->f", centre - facets.midpoints, facets.normals) > 0)


def test_facet_nodes_lie_on_interface():
    facets = interface_facets(SQUARE, 8)
    idx = np.array(np.unravel_index(facets.nodes.ravel(), (9, 9))).T / 8
    on_x = np.isin(idx[:, 0], [0.25, 0.75]) & (idx[:, 1] >= 0.25) & (idx[:, 1] <= 0.75)
    on_y = np.isin(idx[:, 1], [0.25, 0.75]) & (idx[:, 0] >= 0.25) & (idx[:, 0] <= 0.75)
    assert np.all(on_x | on_y)


def test_non_aligned_inclusion_is_a_config_error():
    with pytest.raises(ConfigError):
        CellGeometry(2, (0.3, 0.3), (0.7, 0.7), m=8)
    with pytest.raises(ConfigError):
        interface_facets(SQUARE, 6)


@pytest.mark.parametrize(
    "lo, hi, key",
    [((0.5, 0.2), (0.4, 0.8), "inclusion"), ((0.25,), (0.75,), "inclusion.min"), ((-0.25, 0.0), (0.5, 0.5), "inclusion")],
)
def test_invalid_boxes_name_their_key(lo, hi, key):
    with pytest.raises(ConfigError) as err:
        CellGeometry(2, lo, hi, m=4)
    assert err.value.key == key


def test_tile_examples():
    dom = tile(SQUARE, 8, 8)
    assert dom.facets.total_measure == 16.0
    assert dom.eps * dom.facets.total_measure == 2.0
    assert dom.interface_measure_gap() == 0
    assert tile(SQUARE, 4, 8).phase2_fraction == 0.25


def test_single_tile_matches_unit_cell():
    dom = tile(SQUARE, 1, 8)
    np.testing.assert_array_equal(dom.labels, cell_labels(SQUARE, 8))
    assert len(dom.facets) == len(interface_facets(SQUARE, 8))
    np.testing.assert_array_equal(np.sort(dom.facets.nodes, axis=None), np.sort(interface_facets(SQUARE, 8).nodes, axis=None))


def test_tile_labels_follow_phase_indicator():
    dom = tile(SQUARE, 3, 8)
    x = dom.cell_midpoints()
    expected = phase_indicator(SQUARE, dom.local_coords(x))
    np.testing.assert_array_equal(dom.labels, expected)


def test_tile_refuses_inclusion_touching_boundary():
    layered = CellGeometry(2, (0.5, 0.0), (1.0, 1.0), m=4)
    with pytest.raises(ConfigError):
        tile(layered, 2)


def test_tile_grid_budget():
    with pytest.raises(ResourceError):
        tile(SQUARE, 64, 8, max_nodes=1000)


def test_layer_spanning_the_period():
    geom = CellGeometry(2, (0.5, 0.0), (1.0, 1.0), m=8)
    assert geom.exact_volume_fractions() == (Fraction(1, 2), Fraction(1, 2))
    # faces at y1 = 0.5 and y1 = 1 (== 0), each of length 1
    assert geom.exact_interface_measure() == 2
    assert interface_facets(geom, 8).exact_total_measure == 2
    assert cell_domain(geom).periodic


def test_three_dimensional_box():
    geom = CellGeometry(3, (0.25,) * 3, (0.75,) * 3, m=4)
    facets = interface_facets(geom, 4)
    assert facets.nodes.shape == (24, 4)
    assert facets.total_measure == pytest.approx(6 * 0.25)
    assert tile(geom, 2).interface_measure_gap() == 0


aligned_box = st.integers(2, 12).flatmap(
    lambda m: st.tuples(
        st.just(m),
        st.lists(st.tuples(st.integers(1, m - 1), st.integers(1, m - 1)).filter(lambda t: t[0] != t[1]),
                 min_size=2, max_size=2),
    )
)


def _geom(data):
    m, pairs = data
    lo = tuple(min(p) / m for p in pairs)
    hi = tuple(max(p) / m for p in pairs)
    return CellGeometry(2, lo, hi, m=m)


@settings(max_examples=40, deadline=None)
@given(aligned_box, st.integers(1, 6))
def test_volume_fraction_and_interface_identity_are_exact(data, n):
    geom = _geom(data)
    dom = tile(geom, n)
    assert np.count_nonzero(dom.labels == 2) * Fraction(1, dom.cells**2) == geom.exact_volume_fractions()[1]
    assert dom.interface_measure_gap() == 0


@settings(max_examples=60, deadline=None)
@given(aligned_box, st.lists(st.integers(0, 1023), min_size=2, max_size=2), st.integers(-3, 3), st.integers(-3, 3))
def test_phase_indicator_is_periodic(data, iy, k1, k2):
    geom = _geom(data)
    y = np.array(iy) / 1024  # dyadic, so shifting by integers is exact
    shifted = y + (k1, k2)
    frac = shifted - np.floor(shifted)
    assert phase_indicator(geom, y) == phase_indicator(geom, frac)
