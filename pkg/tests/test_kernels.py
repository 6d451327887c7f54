"""
Tests for the kernel registry, smooth dyadic pieces and kernel validation
"""

import numpy as np
import pytest

from core.errors import ConfigError
from analysis.fitting import fit_exponential_decay, fit_power_law
from analysis.kernels import dyadic_piece, get_kernel, list_kernels, partial_unity, psi, smoothstep, validate_kernel
from geometry.space import build_euclidean_grid


def test_registry():
    assert get_kernel('hilbert').dimension == 1
    assert get_kernel('riesz-2').dimension == 2
    assert 'test-positive' in list_kernels()
    for name in ('riesz-3', 'riesz-x', 'gauss'):
        with pytest.raises(ConfigError):
            get_kernel(name)


def test_kernel_dimension_check():
    with pytest.raises(ConfigError):
        get_kernel('hilbert').check_space(build_euclidean_grid(2, 4, 0.25))


def test_hilbert_entries(line64):
    block = get_kernel('hilbert').matrix(line64, [0, 1], [0, 1, 2])
    assert block[0, 0] == 0.0
    assert block[0, 1] == -64.0
    assert block[1, 0] == 64.0


def test_hilbert_validation(line64):
    report = validate_kernel(line64, get_kernel('hilbert'), samples=300, seed=0)
    assert abs(report.size - 1.0) < 1e-12
    assert report.smoothness <= 2.0 + 1e-9
    assert report.cancellation <= 1e-12
    assert report.passed


def test_riesz_size():
    grid = build_euclidean_grid(2, 8, 0.125)
    report = validate_kernel(grid, get_kernel('riesz-1'), samples=200, seed=1)
    assert report.size <= 1.0 + 1e-9


def test_positive_kernel_fails_cancellation(line64):
    report = validate_kernel(line64, get_kernel('test-positive'), samples=100, seed=2)
    assert not report.cancellation_passed
    assert report.cancellation_witness is not None
    assert not report.to_dict()['passed']['cancellation']


def test_zero_kernel_passes(line64):
    report = validate_kernel(line64, get_kernel('zero'), samples=50)
    assert report.size == 0.0 and report.cancellation == 0.0


def test_smoothstep():
    assert smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0])).tolist() == [0.0, 0.0, 0.5, 1.0, 1.0]


def test_psi_partition_of_unity():
    for s in (0.37, 1.0, 5.2):
        total = sum(psi(np.array([2.0 ** -k * s]), 2.0)[0] for k in range(-60, 61))
        assert total == pytest.approx(1.0)


def test_psi_support():
    values = psi(np.array([0.0, 0.4, 2.0, 3.0]), 2.0)
    assert values.tolist() == [0.0, 0.0, 0.0, 0.0]
    assert psi(np.array([1.0]), 2.0)[0] > 0


def test_partial_unity_is_a_tail_sum():
    rho = np.array([0.01, 0.2, 0.3, 1.7])
    tail = sum(psi(2.0 ** -k * rho, 2.0) for k in range(-3, 61))
    np.testing.assert_allclose(partial_unity(rho, 2.0, -3), tail, atol=1e-12)


def test_dyadic_piece_support(line64):
    piece = dyadic_piece(get_kernel('hilbert'), -3, 2.0)
    row = piece.matrix(line64, [0])[0]
    distance = line64.distances_from(0)
    assert np.all(row[(distance < 1 / 16) | (distance > 1 / 4)] == 0)
    assert np.any(row != 0)


def test_power_law_fit():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    fit = fit_power_law(x, 3.0 * x ** 2)
    assert fit.exponent == pytest.approx(2.0)
    assert fit.constant == pytest.approx(3.0)
    assert fit.residual < 1e-10
    assert np.isnan(fit_power_law([1.0], [1.0]).exponent)


def test_exponential_decay_fit():
    gaps = np.array([0.0, 1.0, 2.0, 3.0])
    fit = fit_exponential_decay(gaps, 5.0 * 2.0 ** (-0.5 * gaps))
    assert fit.exponent == pytest.approx(0.5)
    assert fit.constant == pytest.approx(5.0)
