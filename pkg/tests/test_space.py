"""
Tests for finite spaces: grids, the Heisenberg gauge and the measured structural constants
"""

import numpy as np
import pytest

from core.errors import BudgetError, DocumentError, RegularityError, ScaleError
from geometry.space import (Space, build_euclidean_grid, build_heisenberg_grid, check_doubling,
                            check_holder_metric, check_quasi_triangle, check_regularity, from_points,
                            heisenberg_gauge, heisenberg_inverse, heisenberg_product)


def test_euclidean_grid_layout():
    """Points, cell weights and closed-form diameter of a 1D grid."""
    space = build_euclidean_grid(1, 10, 0.5)
    assert space.n == 10
    assert np.all(space.weights == 0.5)
    assert space.distance(0, 3) == 1.5
    assert space.diameter() == 4.5
    assert space.diameter_method == 'closed-form'
    assert space.min_spacing() == 0.5


def test_two_dimensional_grid_weights():
    space = build_euclidean_grid(2, 8, 0.25)
    assert space.n == 64
    assert space.total_measure() == pytest.approx(4.0)
    assert space.D == 2.0


def test_centered_grid_contains_origin():
    space = build_euclidean_grid(1, 9, 0.25, centered=True)
    assert space.coords[space.nearest_point([0.0]), 0] == 0.0
    assert space.coords.min() == -1.0


def test_point_budget():
    with pytest.raises(BudgetError):
        build_euclidean_grid(2, 400, 0.1)


def test_bad_grid_arguments():
    with pytest.raises(ScaleError):
        build_euclidean_grid(3, 4, 0.1)
    with pytest.raises(ScaleError):
        build_euclidean_grid(1, 1, 0.1)
    with pytest.raises(ScaleError):
        build_euclidean_grid(1, 4, 0.0)


def test_points_space():
    space = from_points([[0.0], [1.0], [3.0]])
    assert space.kind == 'points'
    assert space.diameter() == 3.0
    assert space.diameter_method == 'exact'
    assert space.min_spacing() == 1.0
    assert space.total_measure() == 3.0


def test_nonpositive_weights_rejected():
    with pytest.raises(DocumentError):
        from_points([[0.0], [1.0]], weights=[1.0, 0.0])


def test_ball_is_closed(line64):
    ball = line64.ball(10, 2.0 / 64)
    assert ball.tolist() == [8, 9, 10, 11, 12]
    assert line64.ball_measure(10, 2.0 / 64) == 5.0 / 64


def test_check_value(line64):
    with pytest.raises(ValueError):
        line64.check_value(np.zeros(3))
    bad = np.zeros(64)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        line64.check_value(bad)


def test_space_document_round_trip():
    space = build_euclidean_grid(2, 6, 0.5, centered=True)
    again = Space.from_dict(space.to_dict())
    assert np.array_equal(again.coords, space.coords)
    assert np.array_equal(again.weights, space.weights)

    points = from_points([[0.0, 1.0], [2.0, 0.5]], weights=[0.5, 2.0])
    again = Space.from_dict(points.to_dict())
    assert np.array_equal(again.coords, points.coords)
    assert np.array_equal(again.weights, points.weights)


def test_unknown_space_kind():
    with pytest.raises(DocumentError):
        Space.from_dict({'kind': 'sphere'})


def test_regularity_of_line(line256):
    """mu(B(x, k h)) = (2k + 1) h on the unit-spaced line, so the ratios lie in [2, 2.25]."""
    radii = [k / 256 for k in (4, 8, 16, 32)]
    report = check_regularity(line256, radii, sample_centers=[128])
    assert report.min_ratio == pytest.approx(2.0 + 1.0 / 32)
    assert report.max_ratio == pytest.approx(2.25)
    assert abs(report.exponent - 1.0) < 0.1
    assert report.centers == [128]


def test_regularity_rejects_unresolved_radii(line256):
    with pytest.raises(ScaleError):
        check_regularity(line256, [0.5 / 256])
    with pytest.raises(ScaleError):
        check_regularity(line256, [0.9])
    with pytest.raises(RegularityError):
        check_regularity(line256, [])


def test_regularity_needs_interior_center(line256):
    with pytest.raises(RegularityError):
        check_regularity(line256, [32 / 256], sample_centers=[0])


def test_heisenberg_regularity_exponent():
    space = build_heisenberg_grid(40, 1.0)
    radii = np.geomspace(2.0 * space.min_spacing(), space.diameter() / 4.0, 8)
    report = check_regularity(space, radii, seed=1)
    assert report.clipped_radii
    assert len(report.radii) + len(report.clipped_radii) == 8
    assert len(report.radii) >= 3
    assert abs(report.exponent - 4.0) < 0.3
    assert report.to_dict()["clipped_radii"] == report.clipped_radii


def test_regularity_with_explicit_centers_keeps_every_radius(line256):
    radii = [k / 256 for k in (4, 8, 16, 32)]
    report = check_regularity(line256, radii, sample_centers=[100, 128])
    assert report.clipped_radii == []
    assert report.radii == radii


def test_euclidean_quasi_triangle(line64):
    report = check_quasi_triangle(line64, samples=2000, seed=3)
    assert report.passed
    assert report.measured <= 1.0 + 1e-12
    assert report.witness is None


def test_holder_condition_with_eta_one(line64):
    """|rho(x,z) - rho(y,z)| <= rho(x,y) for a metric."""
    report = check_holder_metric(line64, 1.0, samples=2000, seed=1)
    assert report.samples_used + report.skipped == 2000
    assert report.value <= 1.0 + 1e-12


def test_holder_rejects_bad_eta(line64):
    with pytest.raises(ValueError):
        check_holder_metric(line64, 0.0, samples=10)


def test_doubling_of_line(line256):
    """(4k + 1) / (2k + 1) < 2."""
    value = check_doubling(line256, [k / 256 for k in (2, 4, 8)], sample_centers=[128])
    assert value == pytest.approx(33.0 / 17.0)
    assert value < 2.0


def test_heisenberg_group_law():
    g = np.array([1.0, 2.0, 0.5])
    h = np.array([-0.5, 1.0, 2.0])
    identity = heisenberg_product(g, heisenberg_inverse(g))
    assert np.allclose(identity, 0.0)
    product = heisenberg_product(g, h)
    assert product[0] == 0.5 and product[1] == 3.0
    assert heisenberg_gauge(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)


def test_heisenberg_distance_is_symmetric():
    space = build_heisenberg_grid(5, 0.5)
    matrix = space.distance_matrix()
    assert np.allclose(matrix, matrix.T, rtol=1e-12, atol=0.0)
    assert np.all(np.diag(matrix) == 0.0)
    assert space.D == 4.0


def test_heisenberg_gauge_is_a_metric():
    space = build_heisenberg_grid(5, 0.5)
    assert space.A0 == 1.0
    report = check_quasi_triangle(space, samples=3000, seed=11)
    assert report.passed
