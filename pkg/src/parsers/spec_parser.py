"""
Spec Parser - Parse registry strings for kernels, weights, test functions, scale ranges and radius grids
"""

import re
import logging
from typing import List, Optional

import numpy as np

from core.errors import ConfigError
from analysis.kernels import Kernel, get_kernel
from analysis.weights import Weight, get_weight
from geometry.space import Space

logger = logging.getLogger(__name__)

FUNCTION_KINDS = ('zero', 'const', 'random', 'random-signed', 'spike', 'indicator', 'sine')

_NUMBER = r'[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?'
_SCALES = re.compile(rf'^\s*({_NUMBER})\s*:\s*({_NUMBER})\s*$')
_GRID = re.compile(rf'^\s*(geom|lin)\s*:\s*({_NUMBER})\s*:\s*({_NUMBER})\s*:\s*(\d+)\s*$')
_POW2 = re.compile(r'^\s*pow2\s*:\s*(-?\d+)\s*:\s*(-?\d+)\s*$')


def parse_scales(text: str) -> List[int]:
    """'a:b' -> [a, a+1, ..., b]."""
    match = _SCALES.match(str(text))
    if not match:
        raise ConfigError(f"scale range must look like 'a:b', got '{text}'")
    low, high = float(match.group(1)), float(match.group(2))
    if low != int(low) or high != int(high) or low > high:
        raise ConfigError(f"scale range needs integers a <= b, got '{text}'")
    return list(range(int(low), int(high) + 1))


def parse_t_grid(text: str) -> np.ndarray:
    """'geom:low:high:count' or 'lin:low:high:count' radius grids."""
    match = _GRID.match(str(text))
    if not match:
        raise ConfigError(f"radius grid must look like 'geom:low:high:count', got '{text}'")
    kind, low, high, count = match.group(1), float(match.group(2)), float(match.group(3)), int(match.group(4))
    if low <= 0 or high < low or count < 1:
        raise ConfigError(f"radius grid needs 0 < low <= high and count >= 1, got '{text}'")
    if kind == 'geom':
        return np.geomspace(low, high, count)
    return np.linspace(low, high, count)


def parse_ladder(spec) -> List[float]:
    """Jump-size ladder from 'pow2:a:b' (2^-l for l in a..b) or an explicit list."""
    if isinstance(spec, (list, tuple)):
        values = [float(v) for v in spec]
    else:
        match = _POW2.match(str(spec))
        if match:
            low, high = int(match.group(1)), int(match.group(2))
            if low > high:
                raise ConfigError(f"empty lambda ladder '{spec}'")
            values = [2.0 ** -l for l in range(low, high + 1)]
        else:
            try:
                values = [float(v) for v in str(spec).split(',') if v.strip()]
            except ValueError:
                raise ConfigError(f"cannot parse lambda ladder '{spec}'")
    if not values:
        raise ConfigError("lambda ladder is empty")
    if any(v <= 0 for v in values):
        raise ConfigError(f"lambda values must be positive, got {values}")
    return values


def parse_kernel(name: str) -> Kernel:
    return get_kernel(str(name).strip())


def parse_weight(name: str, space: Space) -> Weight:
    return get_weight(str(name).strip(), space)


def _center_point(space: Space) -> int:
    return space.nearest_point(space.coords.mean(axis=0))


def parse_function(spec: str, space: Space, seed: int = 0) -> np.ndarray:
    """Test function by name: zero, const:c, random, random-signed, spike:h, indicator:radius, sine:freq."""
    kind, _, arg = str(spec).strip().partition(':')
    if kind not in FUNCTION_KINDS:
        raise ConfigError(f"Unknown function: {spec}")
    value: Optional[float] = None
    if arg:
        try:
            value = float(arg)
        except ValueError:
            raise ConfigError(f"function {kind} needs a numeric parameter, got '{arg}'")

    rng = np.random.default_rng(seed)
    if kind == 'zero':
        return np.zeros(space.n)
    if kind == 'const':
        return np.full(space.n, 1.0 if value is None else value)
    if kind == 'random':
        return rng.random(space.n)
    if kind == 'random-signed':
        return rng.uniform(-1.0, 1.0, space.n)
    if kind == 'spike':
        f = np.zeros(space.n)
        f[_center_point(space)] = 1.0 if value is None else value
        return f
    if kind == 'indicator':
        radius = space.diameter() / 8 if value is None else value
        f = np.zeros(space.n)
        f[space.ball(_center_point(space), radius)] = 1.0
        return f
    frequency = 1.0 if value is None else value
    return np.sin(2 * np.pi * frequency * space.coords[:, 0])
