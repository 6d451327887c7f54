"""
Tests for averaging and truncated singular integral profiles and their variational fields
"""

import numpy as np
import pytest

from core.errors import ScaleError
from analysis.kernels import get_kernel
from analysis.operators import (ProfileTable, almost_orthogonality, average, jump_field, k0_for_radius,
                                power_iteration, short_variation, short_variation_square, split_truncation,
                                truncated_si, variation_field)
from analysis.variation import jump_count, r_variation


def test_average_endpoints(line64, rng):
    f = rng.normal(size=64)
    assert average(line64, f, 0.0, 10) == f[10]
    assert average(line64, f, 2.0, 10) == pytest.approx(f.mean())


def test_truncated_si_needs_positive_radius(line64):
    with pytest.raises(ScaleError):
        truncated_si(line64, get_kernel('hilbert'), np.ones(64), 0.0, 3)


def test_profile_table_matches_direct_evaluation(line64, rng):
    f = rng.normal(size=64)
    kernel = get_kernel('hilbert')
    table = ProfileTable(line64, f, kernel)
    for x in (0, 21, 63):
        for t in rng.uniform(0.001, 1.2, 8):
            assert table.value_at(x, t, 'averages') == pytest.approx(average(line64, f, t, x))
            assert table.value_at(x, t, 'singular') == pytest.approx(truncated_si(line64, kernel, f, t, x), abs=1e-10)
    assert table.breaks[0][0] == 0.0
    assert len(table.breaks[0]) == 64


def test_profile_without_kernel(line64):
    table = ProfileTable(line64, np.ones(64))
    with pytest.raises(ValueError):
        table.values(0, 'singular')


def test_window_is_a_prefix(line64, rng):
    table = ProfileTable(line64, rng.normal(size=64))
    whole = table.window(30, 1 / 64, 0.5, 'averages')
    head = table.window(30, 1 / 64, 0.25, 'averages')
    assert np.array_equal(whole[:head.size], head)


def test_variation_field_matches_profiles(line64, rng):
    f = rng.normal(size=64)
    table = ProfileTable(line64, f)
    field = variation_field(line64, f, 2.5, table=table)
    for x in (0, 31, 50):
        assert field[x] == pytest.approx(r_variation(table.values(x, 'averages'), 2.5))
    counts = jump_field(line64, f, 0.2, table=table)
    assert counts[7] == pytest.approx(0.2 * np.sqrt(jump_count(table.values(7, 'averages'), 0.2)))


def test_constant_function_has_no_variation(line64):
    f = np.full(64, 3.0)
    assert np.max(variation_field(line64, f, 2.0)) < 1e-12
    assert np.all(jump_field(line64, f, 0.1) == 0.0)


def test_singular_variation_field(line64, rng):
    f = rng.normal(size=64)
    field = variation_field(line64, f, 2.0, mode='singular', kernel=get_kernel('hilbert'))
    assert field.shape == (64,)
    assert np.all(field >= 0)


def test_k0_for_radius():
    assert k0_for_radius(0.1, 2.0) == -3
    assert k0_for_radius(0.125, 2.0) == -2
    assert k0_for_radius(1.0, 3.0) == 1


def test_split_truncation(line64, rng):
    f = rng.normal(size=64)
    parts = split_truncation(line64, get_kernel('hilbert'), f, 0.1, 2.0)
    assert parts['k0'] == -3
    assert parts['residual'] < 1e-10
    direct = truncated_si(line64, get_kernel('hilbert'), f, 0.1, 12)
    assert parts['truncated'][12] == pytest.approx(direct)
    with pytest.raises(ScaleError):
        split_truncation(line64, get_kernel('hilbert'), f, -1.0, 2.0)


def test_short_variation_of_constant(line64, line_system):
    values = short_variation(line64, line_system, np.full(64, 2.0), -3)
    assert np.max(values) < 1e-12


def test_short_variation_properties(line64, line_system, rng):
    f = rng.normal(size=64)
    local = short_variation(line64, line_system, f, -3, aperture=0.0)
    wide = short_variation(line64, line_system, f, -3, aperture=1.0)
    assert np.all(wide >= local)
    assert np.all(local >= 0)
    square = short_variation_square(line64, line_system, f)
    assert np.all(square >= wide - 1e-12)
    with pytest.raises(ValueError):
        short_variation(line64, line_system, f, -3, mode='singular')


def test_power_iteration():
    matrix = np.diag([3.0, 1.0, 0.5])
    assert power_iteration(lambda v: matrix @ v, 3) == pytest.approx(3.0, rel=1e-8)
    assert power_iteration(lambda v: 0 * v, 3) == 0.0


def test_almost_orthogonality_decays(line64):
    kernel = get_kernel('hilbert')
    matrices = {}
    near = almost_orthogonality(line64, kernel, -2, -2, 2.0, matrices=matrices)
    far = almost_orthogonality(line64, kernel, -2, -5, 2.0, matrices=matrices)
    assert near > 0
    assert far < near
    assert set(matrices) == {-2, -5}
