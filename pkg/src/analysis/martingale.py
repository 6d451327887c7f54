"""
Martingale - Conditional expectations, greedy stopping times and the CZ decomposition
"""

import logging
from typing import Dict, Any, List, Optional, Tuple

import numpy as np

from geometry.dyadic import Cube, CubeSystem

logger = logging.getLogger(__name__)


def cube_averages(system: CubeSystem, f: np.ndarray, k: int) -> np.ndarray:
    """<f>_Q for every scale-k cube, indexed like system.cubes[k]."""
    system.check_scale(k)
    f = system.space.check_value(f)
    lab = system.labels[k]
    w = system.space.weights
    size = len(system.cubes[k])
    if np.iscomplexobj(f):
        total = (np.bincount(lab, weights=f.real * w, minlength=size)
                 + 1j * np.bincount(lab, weights=f.imag * w, minlength=size))
    else:
        total = np.bincount(lab, weights=f * w, minlength=size)
    return total / system.measures[k]


def expectation(system: CubeSystem, f: np.ndarray, k: int) -> np.ndarray:
    """E_k f: the average of f over the scale-k cube of each point."""
    return cube_averages(system, f, k)[system.labels[k]]


def difference(system: CubeSystem, f: np.ndarray, k: int) -> np.ndarray:
    """D_k f = E_k f - E_{k+1} f."""
    system.check_scale(k + 1)
    return expectation(system, f, k) - expectation(system, f, k + 1)


def expectation_table(system: CubeSystem, f: np.ndarray) -> np.ndarray:
    """Row s holds E_{k_min + s} f."""
    return np.stack([expectation(system, f, k) for k in system.scales])


def dyadic_maximal(system: CubeSystem, f: np.ndarray) -> np.ndarray:
    """M_D f(x) = max over cubes Q containing x of <|f|>_Q."""
    magnitude = np.abs(system.space.check_value(f))
    return np.max(np.stack([cube_averages(system, magnitude, k)[system.labels[k]] for k in system.scales]), axis=0)


def maximal_weak_ratio(system: CubeSystem, f: np.ndarray, lam: float) -> float:
    """lambda * mu{M_D f > lambda} / ||f||_1; at most 1 on a finite tree."""
    norm = float(system.space.integral(np.abs(f)))
    if norm == 0:
        return 0.0
    level = system.space.weights[dyadic_maximal(system, f) > lam].sum()
    return float(lam * level / norm)


def telescoping_residual(system: CubeSystem, f: np.ndarray) -> float:
    """max |sum_k D_k f + E_top f - E_bottom f|."""
    total = expectation(system, f, system.k_max).astype(complex if np.iscomplexobj(f) else float)
    for k in system.scales[:-1]:
        total = total + difference(system, f, k)
    return float(np.max(np.abs(total - expectation(system, f, system.k_min))))


def orthogonality_residual(system: CubeSystem, f: np.ndarray) -> float:
    """Relative gap between ||E_bottom f - E_top f||^2 and sum_k ||D_k f||^2."""
    space = system.space
    bottom = expectation(system, f, system.k_min)
    lhs = float(space.integral(np.abs(bottom - expectation(system, f, system.k_max)) ** 2))
    rhs = sum(float(space.integral(np.abs(difference(system, f, k)) ** 2)) for k in system.scales[:-1])
    scale = max(lhs, rhs)
    return abs(lhs - rhs) / scale if scale > 0 else 0.0


class StoppingSequence:
    """Greedy stopping scales l_0 > l_1 > ... at a point."""

    def __init__(self, point: int, scales: List[int], lam: float):
        self.point = point
        self.scales = scales
        self.lam = lam

    def __len__(self) -> int:
        return len(self.scales)

    def to_dict(self) -> Dict[str, Any]:
        """Convert sequence to dictionary."""
        return {'point': self.point, 'scales': self.scales, 'lambda': self.lam}


def _values_at(system: CubeSystem, f: np.ndarray, x: int) -> Dict[int, complex]:
    return {k: cube_averages(system, f, k)[system.labels[k][x]] for k in system.scales}


def greedy_stopping(system: CubeSystem, f: np.ndarray, x: int, lam: float, k_max: Optional[int] = None) -> StoppingSequence:
    """l_0 = k_max; l_{j+1} = the largest scale below l_j with |E_{l_{j+1}} f(x) - E_{l_j} f(x)| > lambda/8."""
    if lam <= 0:
        raise ValueError(f"jump size must be positive, got {lam}")
    k_max = system.k_max if k_max is None else k_max
    system.check_scale(k_max)
    e = _values_at(system, f, x)
    stops = [k_max]
    for k in range(k_max - 1, system.k_min - 1, -1):
        if abs(e[k] - e[stops[-1]]) > lam / 8:
            stops.append(k)
    return StoppingSequence(int(x), stops, lam)


def stopping_mask(table: np.ndarray, lam: float, top: Optional[int] = None) -> np.ndarray:
    """Boolean table of greedy stops for every point at once; rows as in expectation_table."""
    top = table.shape[0] - 1 if top is None else top
    mask = np.zeros(table.shape, dtype=bool)
    mask[top] = True
    current = table[top].copy()
    for s in range(top - 1, -1, -1):
        stop = np.abs(table[s] - current) > lam / 8
        mask[s] = stop
        current = np.where(stop, table[s], current)
    return mask


def martingale_jump_majorant(system: CubeSystem, f: np.ndarray, x: int, lam: float,
                             inner: Cube, outer: Cube) -> float:
    """F'_lambda(Q', Q)(x): l2 norm of the stopped increments of (E_{k0} - E_{k1}) f at x."""
    if not np.any(inner.members == x):
        raise ValueError(f"point {x} is outside the inner cube")
    if not system.contains(outer, inner):
        raise ValueError("inner cube is not contained in the outer cube")
    k0, k1 = inner.scale, outer.scale
    if k0 == k1:
        return 0.0
    e = _values_at(system, f, x)
    stops = greedy_stopping(system, f, x, lam).scales
    # E_t (E_{k0} - E_{k1}) f = E_{clip(t)} f - E_{k1} f, and the sequence ends at t = -infinity
    path = [k1] + [t for t in stops if k0 < t < k1] + [k0]
    return float(np.sqrt(sum(abs(e[b] - e[a]) ** 2 for a, b in zip(path[:-1], path[1:]))))


def martingale_majorant_field(system: CubeSystem, f: np.ndarray, lam: float,
                              k1: Optional[int] = None) -> np.ndarray:
    """N_Q F'_lambda(x) for Q the scale-k1 cube of x, or the global supremum over k1 when None."""
    table = expectation_table(system, f)
    stops = stopping_mask(table, lam)
    tops = range(table.shape[0]) if k1 is None else [k1 - system.k_min]
    field = np.zeros(system.space.n)
    for top in tops:
        anchor = table[top].copy()
        accumulated = np.zeros(system.space.n)
        for s in range(top - 1, -1, -1):
            step = np.abs(table[s] - anchor) ** 2
            np.maximum(field, np.sqrt(accumulated + step), out=field)
            accumulated = np.where(stops[s], accumulated + step, accumulated)
            anchor = np.where(stops[s], table[s], anchor)
    return field


class CZDecomposition:
    """f = g + sum of b^Q over the maximal cubes with <|f|>_Q > lambda."""

    def __init__(self, g: np.ndarray, bad: List[Tuple[Cube, np.ndarray]], lam: float):
        self.g = g
        self.bad = bad
        self.lam = lam

    def __iter__(self):
        yield self.g
        yield self.bad

    @property
    def good_ratio(self) -> float:
        """Measured ||g||_inf / lambda."""
        return float(np.max(np.abs(self.g)) / self.lam) if self.g.size else 0.0

    def bad_measure(self) -> float:
        return float(sum(cube.measure for cube, _ in self.bad))

    def to_dict(self) -> Dict[str, Any]:
        """Summary without the grid functions."""
        return {
            'lambda': self.lam,
            'bad_cubes': [list(cube.identifier) for cube, _ in self.bad],
            'bad_measure': self.bad_measure(),
            'good_ratio': self.good_ratio,
        }


def cz_decompose(system: CubeSystem, f: np.ndarray, lam: float) -> CZDecomposition:
    """Select maximal cubes with <|f|>_Q > lambda from the top scale down."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    f = system.space.check_value(f)
    magnitude = np.abs(f)
    covered = np.zeros(system.space.n, dtype=bool)
    g = f.astype(complex) if np.iscomplexobj(f) else f.astype(float)
    bad: List[Tuple[Cube, np.ndarray]] = []
    for k in reversed(system.scales):
        heavy = np.flatnonzero(cube_averages(system, magnitude, k) > lam)
        means = cube_averages(system, f, k)
        for index in heavy:
            cube = system.cubes[k][int(index)]
            if covered[cube.members[0]]:
                continue
            covered[cube.members] = True
            g[cube.members] = means[index]
            b = np.zeros_like(g)
            b[cube.members] = f[cube.members] - means[index]
            bad.append((cube, b))
    logger.debug(f"CZ decomposition at lambda={lam}: {len(bad)} bad cubes")
    return CZDecomposition(g, bad, lam)
