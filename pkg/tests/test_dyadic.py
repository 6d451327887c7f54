"""
Tests for cube systems: shifted grids, Christ cubes, adjacency and small boundaries
"""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from core.errors import AdjacencyError, ConstructionError, DocumentError, ScaleError
from geometry.dyadic import (BallQuery, CubeSystem, _coarser_index, build_christ_cubes, build_shifted_grids,
                             check_adjacency, measure_sandwich, measure_small_boundary, shifted_cube_bounds,
                             shifted_cube_index, verify_cube_axioms)
from geometry.space import build_euclidean_grid, build_heisenberg_grid, from_points


def test_shifted_grid_count():
    assert len(build_shifted_grids(build_euclidean_grid(1, 16, 1 / 16), range(-4, 1))) == 3
    systems = build_shifted_grids(build_euclidean_grid(2, 16, 1 / 16), range(-4, 1))
    assert len(systems) == 9
    assert sorted(s.alpha for s in systems)[0] == (0, 0)


def test_unshifted_tree(line_system):
    assert line_system.alpha == (0,)
    assert len(line_system.cubes_at(-6)) == 64
    assert len(line_system.cubes_at(0)) == 1
    assert line_system.measures[0][0] == 1.0
    half = line_system.cube_of(0, -1)
    assert half.members.tolist() == list(range(32))
    assert len(half.children) == 2
    assert line_system.parent_of(half).scale == 0


def test_navigation(line_system):
    leaf = line_system.cube_of(5, -6)
    chain = line_system.ancestors(leaf)
    assert [c.scale for c in chain] == list(range(-5, 1))
    assert all(line_system.contains(c, leaf) for c in chain)
    assert not line_system.contains(leaf, chain[0])
    below = line_system.descendants(line_system.cube_of(0, -3))
    assert len(below) == 2 + 4 + 8
    assert len(line_system.all_cubes()) == 127


@pytest.mark.parametrize('alpha', [0, 1, 2])
def test_shifted_systems_satisfy_axioms(line64, alpha):
    systems = build_shifted_grids(line64, range(-6, 1))
    report = verify_cube_axioms(systems[alpha])
    assert report.passed, report.to_dict()


def test_christ_cubes_satisfy_axioms(line64):
    system = build_christ_cubes(line64, 2.0, range(-6, 1), seed=4)
    assert system.construction == 'christ'
    assert system.a0 == 0.25
    report = verify_cube_axioms(system, a0_min=0.25)
    assert report.passed, report.to_dict()
    assert report.constants['a0_meets_bound']
    assert measure_sandwich(system)[0] >= 0.25 * (1 - 1e-6)
    assert system.a0 <= system.C1 <= 4.0
    assert len(system.cubes_at(-6)) == 64
    assert len(system.top_cubes()) == 1


def test_christ_cubes_on_scattered_points():
    rng = np.random.default_rng(2)
    space = from_points(rng.random((120, 2)))
    system = build_christ_cubes(space, 3.0, range(-3, 1), seed=0)
    report = verify_cube_axioms(system)
    assert report.passed, report.to_dict()


def test_christ_rejects_degenerate_net(line64):
    with pytest.raises(ConstructionError):
        build_christ_cubes(line64, 2.0, range(1, 3))

def _quarters():
    """16 points at spacing 1/16 cut into four cubes of four points at scale -2."""
    space = build_euclidean_grid(1, 16, 1.0 / 16)
    labels = np.repeat(np.arange(4), 4)
    return space, labels, np.array([1, 5, 9, 13])


def test_sandwich_holds_for_declared_constants():
    space, labels, centers = _quarters()
    system = CubeSystem(space, 2.0, {-2: labels}, {-2: centers}, a0=0.25, C1=1.0)
    assert verify_cube_axioms(system).passed


def test_sandwich_catches_a_point_taken_from_the_inner_ball():
    space, labels, centers = _quarters()
    labels = labels.copy()
    labels[6] = 2
    declared = CubeSystem(space, 2.0, {-2: labels}, {-2: centers}, a0=0.25, C1=1.0)
    report = verify_cube_axioms(declared)
    assert not report.passed
    assert report.results['sandwich']['witness'] == {'scale': -2, 'cube': 1, 'point': 6, 'side': 'inner'}
    assert report.results['coverage']['passed'] and report.results['nesting']['passed']

    # measured constants shrink around the defect; an explicit floor still sees it
    measured = CubeSystem(space, 2.0, {-2: labels}, {-2: centers})
    assert measured.a0 < 0.25
    assert verify_cube_axioms(measured).passed
    assert not verify_cube_axioms(measured, a0_min=0.25).passed
    assert not verify_cube_axioms(measured).constants['a0_meets_bound']


@pytest.mark.slow
def test_christ_cubes_on_a_long_line():
    space = build_euclidean_grid(1, 4096, 1.0 / 4096)
    system = build_christ_cubes(space, 2.0, range(-12, 1), seed=1)
    report = verify_cube_axioms(system, a0_min=0.25)
    assert report.passed, report.to_dict()
    assert len(system.cubes_at(-12)) == 4096


@pytest.mark.slow
def test_christ_cubes_on_the_heisenberg_lattice():
    space = build_heisenberg_grid(16, 1.0 / 16)
    assert space.n == 4096
    system = build_christ_cubes(space, 2.0, range(-4, 2), seed=3)
    report = verify_cube_axioms(system, a0_min=1.0 / (4.0 * space.A0))
    assert report.passed, report.to_dict()
    assert report.constants['a0_meets_bound']
    assert len(system.cubes_at(-4)) == 4096


def test_shifted_grids_need_euclidean_space():
    with pytest.raises(ConstructionError):
        build_shifted_grids(from_points([[0.0], [1.0]]), range(-1, 1))


@given(st.floats(min_value=0.0, max_value=0.999), st.integers(min_value=0, max_value=2),
       st.integers(min_value=-8, max_value=0))
def test_shifted_index_matches_bounds(x, alpha, scale):
    """The indexed cube is the interval that holds x."""
    m = int(shifted_cube_index(np.array([x]), alpha, scale)[0])
    lo, hi = shifted_cube_bounds(m, alpha, scale)
    assert lo <= x + 1e-12
    assert x < hi + 1e-12


@given(st.integers(min_value=-500, max_value=500), st.integers(min_value=0, max_value=2),
       st.integers(min_value=-8, max_value=-1))
def test_coarser_index_contains_finer_cube(m, alpha, scale):
    lo, hi = shifted_cube_bounds(m, alpha, scale)
    parent = int(_coarser_index(np.array([m]), alpha, scale)[0])
    plo, phi = shifted_cube_bounds(parent, alpha, scale + 1)
    assert plo <= lo + 1e-9
    assert hi <= phi + 1e-9


def test_adjacency_constant(line256):
    systems = build_shifted_grids(line256, range(-8, 1))
    rng = np.random.default_rng(7)
    queries = [BallQuery(int(c), float(r)) for c, r in zip(rng.integers(40, 216, 200), rng.uniform(2 / 256, 0.1, 200))]
    report = check_adjacency(systems, queries)
    assert len(report.ratios) == 200
    assert report.C3 <= 12.0
    assert report.to_dict()['queries'] == 200


def test_adjacency_fails_without_a_covering_cube(line256):
    systems = build_shifted_grids(line256, range(-8, -2))
    with pytest.raises(AdjacencyError):
        check_adjacency(systems, [BallQuery(128, 0.3)])


def test_adjacency_needs_compatible_systems(line64, line256):
    a = build_shifted_grids(line64, range(-6, 1))[0]
    b = build_shifted_grids(line256, range(-6, 1))[0]
    with pytest.raises(ConstructionError):
        check_adjacency([a, b], [BallQuery(10, 0.1)])


def test_ball_query_radius():
    with pytest.raises(ScaleError):
        BallQuery(0, 0.0)


def test_small_boundary_of_intervals(line256):
    system = build_shifted_grids(line256, range(-8, 1))[0]
    report = measure_small_boundary(system, [0.05, 0.1, 0.2, 0.4])
    assert report.regions > 0
    assert report.eta > 0
    assert all(b >= a for a, b in zip(report.total, report.total[1:]))
    assert system.boundary['eta'] == report.eta


def test_small_boundary_of_balls(line256):
    queries = [BallQuery(128, 0.1), BallQuery(100, 0.05)]
    report = measure_small_boundary(queries, [0.1, 0.2, 0.4], space=line256)
    assert report.regions == 2
    assert report.eta > 0


@pytest.mark.slow
def test_small_boundary_exponent_of_balls():
    space = build_euclidean_grid(1, 4096, 1.0 / 4096)
    queries = [BallQuery(2048, 0.1), BallQuery(1000, 0.15), BallQuery(3000, 0.08)]
    report = measure_small_boundary(queries, np.geomspace(0.02, 0.2, 6), space=space)
    assert report.skipped == 0
    assert report.regions == 3
    assert abs(report.eta - 1.0) < 0.15
    assert np.isfinite(report.C3)


def test_small_boundary_rejects_bad_tau(line_system):
    with pytest.raises(ScaleError):
        measure_small_boundary(line_system, [0.0, 0.5])
    with pytest.raises(ScaleError):
        measure_small_boundary(line_system, [])


def test_system_document_round_trip(line_system):
    data = line_system.to_dict(with_diameters=True)
    again = CubeSystem.from_dict(data)
    assert again.scales == line_system.scales
    for k in line_system.scales:
        assert np.array_equal(again.labels[k], line_system.labels[k])
    assert again.a0 == line_system.a0 and again.C1 == line_system.C1
    assert data['cubes']['-1'][0]['diameter'] == 31 / 64


def test_system_document_schema(line_system):
    data = line_system.to_dict()
    data['schema'] = 'other/1'
    with pytest.raises(DocumentError):
        CubeSystem.from_dict(data)
