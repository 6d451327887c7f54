"""
Weights - Muckenhoupt characteristics over dyadic cubes, weighted and weak-type norms
"""

import logging
import weakref
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigError
from geometry.dyadic import CubeSystem
from geometry.space import Space
from analysis.martingale import cube_averages

logger = logging.getLogger(__name__)

WEIGHT_KINDS = ('const', 'power', 'checkerboard')
AINFTY_CONVENTION = 'fujii-wilson'


def dual_exponent(p: float) -> float:
    """p' with 1/p + 1/p' = 1."""
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    return p / (p - 1.0)


class Weight:
    """A strictly positive grid function with characteristics cached per (system, p)."""

    def __init__(self, values: np.ndarray, name: str = 'custom'):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValueError("a weight must be a finite one-dimensional array")
        if np.any(values <= 0):
            raise ValueError("weights must be strictly positive")
        values.setflags(write=False)
        self.values = values
        self.name = name
        # system -> {(characteristic, p): value}; entries die with their system
        self.cache: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()

    def __len__(self) -> int:
        return self.values.size

    def power(self, exponent: float, name: Optional[str] = None) -> 'Weight':
        return Weight(self.values ** exponent, name or f"({self.name})^{exponent:g}")

    def dual(self, p: float) -> 'Weight':
        """sigma = w^(1 - p')."""
        return self.power(1.0 - dual_exponent(p), f"dual({self.name}, {p:g})")

    def cached(self, system: CubeSystem, key: str, p: float, compute) -> float:
        entries = self.cache.setdefault(system, {})
        slot = (key, float(p))
        if slot not in entries:
            entries[slot] = float(compute())
        return entries[slot]

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'min': float(self.values.min()), 'max': float(self.values.max())}


def get_weight(name: str, space: Space) -> Weight:
    """Weight by registry name: const, power:a or checkerboard:h."""
    kind, _, arg = name.partition(':')
    if kind == 'const':
        return Weight(np.ones(space.n), 'const')
    if kind not in WEIGHT_KINDS:
        raise ConfigError(f"Unknown weight: {name}")
    try:
        value = float(arg)
    except ValueError:
        raise ConfigError(f"weight {kind} needs a numeric parameter, got '{arg}'")
    if kind == 'power':
        origin = space.nearest_point(np.zeros(space.coords.shape[1]))
        distance = np.maximum(space.distances_from(origin), space.min_spacing())
        return Weight(distance ** value, name)
    if value <= 0:
        raise ConfigError(f"checkerboard height must be positive, got {value}")
    if space.lattice is None:
        raise ConfigError("checkerboard weights need a lattice space")
    even = np.sum(space.lattice, axis=1) % 2 == 0
    return Weight(np.where(even, value, 1.0), name)


def list_weights() -> List[str]:
    return ['const', 'power:<a>', 'checkerboard:<h>']


def _check_weight(system: CubeSystem, weight: Weight) -> None:
    if len(weight) != system.space.n:
        raise ValueError(f"weight has {len(weight)} values, the space has {system.space.n} points")


def two_weight(system: CubeSystem, w: Weight, sigma: Weight, p: float) -> float:
    """[w, sigma]_{A_p} = sup over cubes of <w>_Q <sigma>_Q^(p-1)."""
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    _check_weight(system, w)
    _check_weight(system, sigma)
    best = 0.0
    for k in system.scales:
        products = cube_averages(system, w.values, k) * cube_averages(system, sigma.values, k) ** (p - 1.0)
        best = max(best, float(products.max()))
    return best


def ap_characteristic(system: CubeSystem, w: Weight, p: float) -> float:
    """[w]_{A_p} = [w, w^(1-p')]_{A_p}."""
    return w.cached(system, 'ap', p, lambda: two_weight(system, w, w.dual(p), p))


def ainfty_characteristic(system: CubeSystem, w: Weight) -> float:
    """sup over cubes of w(Q)^-1 times the integral over Q of M_D(w 1_Q), M_D restricted to subcubes of Q."""
    _check_weight(system, w)

    def compute() -> float:
        mu = system.space.weights
        best = 0.0
        running = np.zeros(system.space.n)
        for k in system.scales:
            np.maximum(running, cube_averages(system, w.values, k)[system.labels[k]], out=running)
            size = len(system.cubes[k])
            integral = np.bincount(system.labels[k], weights=running * mu, minlength=size)
            mass = np.bincount(system.labels[k], weights=w.values * mu, minlength=size)
            best = max(best, float(np.max(integral / mass)))
        return best

    return w.cached(system, 'ainfty', 0.0, compute)


def characteristics(system: CubeSystem, w: Weight, sigma: Weight, p: float) -> Dict[str, Any]:
    """All brackets used by the weighted bounds, with the A_infinity convention recorded."""
    return {
        'p': p,
        'two_weight': two_weight(system, w, sigma, p),
        'w_ap': ap_characteristic(system, w, p),
        'w_ainfty': ainfty_characteristic(system, w),
        'sigma_ainfty': ainfty_characteristic(system, sigma),
        'ainfty_convention': AINFTY_CONVENTION,
    }


def weighted_bound(system: CubeSystem, w: Weight, sigma: Weight, p: float) -> float:
    """[w, sigma]^(1/p) ([w]_{A_inf}^(1/p') + [sigma]_{A_inf}^(1/p))."""
    q = dual_exponent(p)
    return (two_weight(system, w, sigma, p) ** (1.0 / p)
            * (ainfty_characteristic(system, w) ** (1.0 / q) + ainfty_characteristic(system, sigma) ** (1.0 / p)))


def weak_weighted_bound(system: CubeSystem, w: Weight, sigma: Weight, p: float) -> float:
    """[w, sigma]^(1/p) [w]_{A_inf}^(1/p')."""
    return two_weight(system, w, sigma, p) ** (1.0 / p) * ainfty_characteristic(system, w) ** (1.0 / dual_exponent(p))


def _measure(space: Space, w: Optional[Weight]) -> np.ndarray:
    return space.weights if w is None else space.weights * w.values


def weighted_norm(space: Space, f: np.ndarray, p: float, w: Optional[Weight] = None) -> float:
    """||f||_{L^p(w)}; the plain measure when w is None."""
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    magnitude = np.abs(space.check_value(f))
    return float(np.sum(magnitude ** p * _measure(space, w)) ** (1.0 / p))


def weak_lp_quasinorm(space: Space, f: np.ndarray, p: float, w: Optional[Weight] = None) -> float:
    """max over the values v of |f| of v mu_w{|f| >= v}^(1/p), the supremum of lambda mu_w{|f| > lambda}^(1/p)."""
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    magnitude = np.abs(space.check_value(f))
    measure = _measure(space, w)
    order = np.argsort(-magnitude, kind='stable')
    values = magnitude[order]
    mass = np.cumsum(measure[order])
    # mass up to the last occurrence of each value
    last = np.append(values[1:] != values[:-1], True)
    levels, masses = values[last], mass[last]
    if levels.size == 0:
        return 0.0
    return float(np.max(levels * masses ** (1.0 / p)))


def weak_lp_bound(p: float) -> float:
    """2^p (1 + 1/(1 - p))."""
    return 2.0 ** p * (1.0 + 1.0 / (1.0 - p))


class SubadditivityReport:
    """Both sides of the weak L^p subadditivity estimate for a family of functions."""

    def __init__(self, p: float, lhs: float, rhs: float):
        self.p = p
        self.lhs = lhs
        self.rhs = rhs
        self.bound = weak_lp_bound(p)

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0

    @property
    def passed(self) -> bool:
        return self.ratio <= self.bound

    def to_dict(self) -> Dict[str, Any]:
        return {'p': self.p, 'lhs': self.lhs, 'rhs': self.rhs, 'ratio': self.ratio, 'bound': self.bound,
                'passed': self.passed}


def check_weak_lp_subadditivity(space: Space, g_list: Sequence[np.ndarray], p: float) -> SubadditivityReport:
    """||sum g_j||_{p,inf}^p against sum ||g_j||_{p,inf}^p for 0 < p < 1."""
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if not g_list:
        raise ValueError("need at least one function")
    total = np.sum([np.abs(space.check_value(g)) for g in g_list], axis=0)
    lhs = weak_lp_quasinorm(space, total, p) ** p
    rhs = float(sum(weak_lp_quasinorm(space, g, p) ** p for g in g_list))
    return SubadditivityReport(p, lhs, rhs)


def weak_weighted_ratio(system: CubeSystem, lhs: np.ndarray, f: np.ndarray, w: Weight, sigma: Weight,
                        p: float) -> float:
    """||lhs||_{L^{p,inf}(w)} / ([w, sigma]^(1/p) [w]_{A_inf}^(1/p') ||f||_{L^p(sigma)})."""
    space = system.space
    denominator = weak_weighted_bound(system, w, sigma, p) * weighted_norm(space, f, p, sigma)
    if denominator == 0:
        return 0.0
    return weak_lp_quasinorm(space, lhs, p, w) / denominator


def strong_weighted_ratio(system: CubeSystem, lhs: np.ndarray, f: np.ndarray, w: Weight, sigma: Weight,
                          p: float) -> float:
    """||lhs||_{L^p(w)} / (weighted_bound ||f||_{L^p(sigma)})."""
    space = system.space
    denominator = weighted_bound(system, w, sigma, p) * weighted_norm(space, f, p, sigma)
    if denominator == 0:
        return 0.0
    return weighted_norm(space, lhs, p, w) / denominator
