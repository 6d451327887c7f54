"""
Tests for weights, dyadic Muckenhoupt characteristics and weak-type quasinorms
"""

import gc

import numpy as np
import pytest

from core.errors import ConfigError
from analysis.weights import (Weight, ainfty_characteristic, ap_characteristic, characteristics,
                              check_weak_lp_subadditivity, dual_exponent, get_weight, list_weights,
                              strong_weighted_ratio, two_weight, weak_lp_bound, weak_lp_quasinorm,
                              weak_weighted_ratio, weighted_bound, weighted_norm)
from geometry.dyadic import build_shifted_grids
from geometry.space import build_euclidean_grid, from_points


@pytest.fixture
def centered():
    """33 points on [-1, 1]."""
    return build_euclidean_grid(1, 33, 1.0 / 16, centered=True)


@pytest.fixture
def centered_system(centered):
    return build_shifted_grids(centered, range(-4, 2))[0]


def test_dual_exponent():
    assert dual_exponent(2.0) == 2.0
    assert dual_exponent(3.0) == 1.5
    with pytest.raises(ValueError):
        dual_exponent(1.0)


def test_weight_values():
    with pytest.raises(ValueError):
        Weight(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        Weight(np.array([[1.0]]))
    w = Weight(np.array([1.0, 4.0]))
    assert w.dual(2.0).values.tolist() == [1.0, 0.25]
    with pytest.raises(ValueError):
        w.values[0] = 2.0


def test_registry(centered):
    assert np.all(get_weight('const', centered).values == 1.0)
    power = get_weight('power:0.5', centered)
    assert power.values[16] == pytest.approx(0.25)
    assert power.values[0] == pytest.approx(1.0)
    board = get_weight('checkerboard:3', centered)
    assert sorted(set(board.values.tolist())) == [1.0, 3.0]
    assert len(list_weights()) == 3
    for name in ('gauss', 'power:x', 'checkerboard:-1'):
        with pytest.raises(ConfigError):
            get_weight(name, centered)
    with pytest.raises(ConfigError):
        get_weight('checkerboard:2', from_points([[0.0], [1.0]]))


def test_constant_weight_characteristics(centered_system):
    one = Weight(np.ones(33))
    assert two_weight(centered_system, one, one, 2.0) == 1.0
    assert ap_characteristic(centered_system, one, 3.0) == 1.0
    assert ainfty_characteristic(centered_system, one) == 1.0
    assert weighted_bound(centered_system, one, one, 2.0) == 2.0


def test_ap_is_the_dual_two_weight_bracket(centered, centered_system):
    w = get_weight('power:0.5', centered)
    for p in (1.5, 2.0, 4.0):
        assert ap_characteristic(centered_system, w, p) == two_weight(centered_system, w, w.dual(p), p)
        assert ap_characteristic(centered_system, w, p) >= 1.0 - 1e-12
    assert ainfty_characteristic(centered_system, w) >= 1.0


def test_characteristics_grow_with_the_power(centered, centered_system):
    brackets = [ap_characteristic(centered_system, get_weight(f"power:{a}", centered), 2.0) for a in (0.0, 0.5, 0.9)]
    assert brackets[0] == pytest.approx(1.0)
    assert brackets[0] < brackets[1] < brackets[2]


def test_characteristics_report(centered, centered_system):
    w = get_weight('power:0.25', centered)
    data = characteristics(centered_system, w, w.dual(2.0), 2.0)
    assert data['ainfty_convention'] == 'fujii-wilson'
    assert data['two_weight'] == data['w_ap']
    with pytest.raises(ValueError):
        two_weight(centered_system, w, Weight(np.ones(3)), 2.0)
    with pytest.raises(ValueError):
        two_weight(centered_system, w, w, 1.0)


def test_weak_quasinorm_examples():
    space = from_points([[0.0], [1.0], [2.0], [3.0]])
    f = np.array([3.0, 1.0, 1.0, 1.0])
    assert weak_lp_quasinorm(space, f, 1.0) == 4.0
    assert weak_lp_quasinorm(space, f, 2.0) == 3.0
    assert weak_lp_quasinorm(space, np.zeros(4), 1.0) == 0.0
    assert weighted_norm(space, f, 2.0) == pytest.approx(np.sqrt(12.0))
    heavy = Weight(np.array([1.0, 1.0, 1.0, 10.0]))
    assert weak_lp_quasinorm(space, f, 1.0, heavy) == 13.0


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("weighted", [False, True])
def test_weak_quasinorm_is_below_the_strong_norm(p, weighted):
    space = build_euclidean_grid(1, 50, 0.1)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        f = rng.normal(size=50)
        w = Weight(rng.uniform(0.01, 50.0, size=50)) if weighted else None
        assert weak_lp_quasinorm(space, f, p, w) <= weighted_norm(space, f, p, w) * (1 + 1e-12)


def test_weak_quasinorm_under_a_point_mass():
    space = from_points([[0.0], [1.0], [2.0]])
    f = np.array([2.0, 1.0, 0.5])
    w = Weight(np.array([1.0, 100.0, 1.0]))
    # levels: 2 * 1, 1 * 101, 0.5 * 102
    assert weak_lp_quasinorm(space, f, 1.0, w) == pytest.approx(101.0)
    assert weighted_norm(space, f, 1.0, w) == pytest.approx(102.5)


def test_weak_subadditivity(rng):
    space = build_euclidean_grid(1, 64, 1.0 / 64)
    g_list = [rng.random(64) * (rng.random(64) < 0.2) for _ in range(6)]
    report = check_weak_lp_subadditivity(space, g_list, 0.5)
    assert report.passed
    assert report.bound == pytest.approx(weak_lp_bound(0.5))
    assert report.to_dict()['ratio'] == report.ratio
    with pytest.raises(ValueError):
        check_weak_lp_subadditivity(space, g_list, 1.0)
    with pytest.raises(ValueError):
        check_weak_lp_subadditivity(space, [], 0.5)


def test_unweighted_ratios_of_an_indicator(centered, centered_system):
    """With w = sigma = 1 the strong bound is 2 and the weak bound is 1."""
    one = Weight(np.ones(33))
    f = np.zeros(33)
    f[10:20] = 1.0
    assert strong_weighted_ratio(centered_system, f, f, one, one, 2.0) == pytest.approx(0.5)
    assert weak_weighted_ratio(centered_system, f, f, one, one, 2.0) == pytest.approx(1.0)
    assert strong_weighted_ratio(centered_system, f, np.zeros(33), one, one, 2.0) == 0.0


def test_characteristics_are_cached_per_system(centered):
    w = get_weight('power:0.5', centered)
    first, second = build_shifted_grids(centered, range(-4, 2))[:2]
    a = ap_characteristic(first, w, 2.0)
    b = ap_characteristic(second, w, 2.0)
    assert a == pytest.approx(two_weight(first, w, w.dual(2.0), 2.0))
    assert b == pytest.approx(two_weight(second, w, w.dual(2.0), 2.0))
    assert set(w.cache.keys()) == {first, second}


def test_cache_entries_die_with_their_system(centered):
    w = get_weight('power:0.5', centered)
    system = build_shifted_grids(centered, range(-4, 2))[0]
    ap_characteristic(system, w, 2.0)
    ainfty_characteristic(system, w)
    assert len(w.cache) == 1
    del system
    gc.collect()
    assert len(w.cache) == 0


@pytest.mark.parametrize("p", [0.3, 0.5, 0.9])
def test_weak_subadditivity_over_random_indicator_families(p):
    space = build_euclidean_grid(1, 128, 1.0 / 128)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        count = int(rng.integers(1, 12))
        g_list = [2.0 ** rng.uniform(-4, 4) * (rng.random(128) < rng.uniform(0.02, 0.6)) for _ in range(count)]
        report = check_weak_lp_subadditivity(space, g_list, p)
        assert report.passed, (seed, report.to_dict())
