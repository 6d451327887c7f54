"""
Kernels - Calderón-Zygmund kernel registry, smooth dyadic pieces and kernel validation
"""

import logging
from typing import Callable, Dict, Any, List, Optional, Sequence

import numpy as np

from core.errors import ConfigError
from geometry.space import Space

logger = logging.getLogger(__name__)

KERNEL_NAMES = ('hilbert', 'riesz-1', 'riesz-2', 'zero', 'test-positive')


class Kernel:
    """K(x, y) on the points of a space, zero on the diagonal."""

    def __init__(self, name: str, evaluator: Callable[[Space, np.ndarray, np.ndarray], np.ndarray],
                 eta: float = 1.0, size_constant: float = 1.0, dimension: Optional[int] = None):
        self.name = name
        self.evaluator = evaluator
        self.eta = eta
        self.size_constant = size_constant
        self.dimension = dimension

    def check_space(self, space: Space) -> None:
        if self.dimension is not None and space.coords.shape[1] != self.dimension:
            raise ConfigError(f"kernel {self.name} needs {self.dimension}-dimensional coordinates")

    def matrix(self, space: Space, rows: Sequence[int], cols: Optional[Sequence[int]] = None) -> np.ndarray:
        """Block K(x_rows, y_cols)."""
        rows = np.asarray(rows, dtype=int)
        cols = np.arange(space.n) if cols is None else np.asarray(cols, dtype=int)
        return self.evaluator(space, rows, cols)

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'eta': self.eta, 'size_constant': self.size_constant}


def _differences(space: Space, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return space.coords[rows][:, None, :] - space.coords[cols][None, :, :]


def _hilbert(space: Space, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    diff = _differences(space, rows, cols)[..., 0]
    out = np.zeros(diff.shape)
    np.divide(1.0, diff, out=out, where=diff != 0)
    return out


def _riesz(component: int) -> Callable[[Space, np.ndarray, np.ndarray], np.ndarray]:
    def evaluate(space: Space, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        diff = _differences(space, rows, cols)
        norm = np.sqrt(np.sum(diff * diff, axis=-1))
        out = np.zeros(norm.shape)
        np.divide(diff[..., component], norm ** 3, out=out, where=norm > 0)
        return out
    return evaluate


def _zero(space: Space, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return np.zeros((rows.size, cols.size))


def _positive(space: Space, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    dist = space.distances_between(rows, cols)
    out = np.zeros(dist.shape)
    np.divide(1.0, dist ** space.D, out=out, where=dist > 0)
    return out


def get_kernel(name: str) -> Kernel:
    """Kernel by registry name."""
    if name == 'hilbert':
        return Kernel('hilbert', _hilbert, eta=1.0, dimension=1)
    if name.startswith('riesz-'):
        try:
            component = int(name.split('-', 1)[1])
        except ValueError:
            raise ConfigError(f"Unknown kernel: {name}")
        if component not in (1, 2):
            raise ConfigError(f"riesz kernels have components 1 and 2, got {component}")
        return Kernel(name, _riesz(component - 1), eta=1.0, dimension=2)
    if name == 'zero':
        return Kernel('zero', _zero, eta=1.0)
    if name == 'test-positive':
        return Kernel('test-positive', _positive, eta=1.0)
    raise ConfigError(f"Unknown kernel: {name}")


# Smooth truncations

def smoothstep(u: np.ndarray) -> np.ndarray:
    """phi(u) = 0 below 0, 3u^2 - 2u^3 on [0, 1], 1 above 1."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _log_kappa(s: np.ndarray, kappa: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.full(s.shape, -np.inf)
    np.divide(np.log(s, out=np.full(s.shape, -np.inf), where=s > 0), np.log(kappa), out=out, where=s > 0)
    return out


def psi(s: np.ndarray, kappa: float) -> np.ndarray:
    """Bump supported on [1/kappa, kappa] with sum over k of psi(kappa^-k s) = 1."""
    u = _log_kappa(s, kappa)
    return smoothstep(u + 1.0) - smoothstep(u)


def partial_unity(rho: np.ndarray, kappa: float, k_low: int) -> np.ndarray:
    """sum over k >= k_low of psi(kappa^-k rho) = phi(log_kappa rho - k_low + 1)."""
    return smoothstep(_log_kappa(rho, kappa) - k_low + 1.0)


def dyadic_piece(kernel: Kernel, k: int, kappa: float) -> Kernel:
    """K_k(x, y) = K(x, y) psi(kappa^-k rho(x, y)), supported where kappa^(k-1) < rho < kappa^(k+1)."""
    scale = float(kappa) ** k

    def evaluate(space: Space, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return kernel.evaluator(space, rows, cols) * psi(space.distances_between(rows, cols) / scale, kappa)

    return Kernel(f"{kernel.name}@{k}", evaluate, eta=kernel.eta, size_constant=kernel.size_constant,
                  dimension=kernel.dimension)


# Validation

class KernelReport:
    """Worst sampled size, smoothness and cancellation of a kernel."""

    def __init__(self, name: str, eta: float):
        self.name = name
        self.eta = eta
        self.size = 0.0
        self.smoothness = 0.0
        self.smoothness_combined = 0.0
        self.cancellation = 0.0
        self.cancellation_witness: Optional[Dict[str, Any]] = None
        self.thresholds: Dict[str, float] = {}
        self.samples = 0

    @property
    def size_passed(self) -> bool:
        return self.size <= self.thresholds.get('size', 1.0 + 1e-9)

    @property
    def smoothness_passed(self) -> bool:
        return self.smoothness <= self.thresholds.get('smoothness', 2.0 + 1e-9)

    @property
    def cancellation_passed(self) -> bool:
        return self.cancellation <= self.thresholds.get('cancellation', 1e-12)

    @property
    def passed(self) -> bool:
        return self.size_passed and self.smoothness_passed and self.cancellation_passed

    def to_dict(self) -> Dict[str, Any]:
        """Convert report to dictionary."""
        return {
            'kernel': self.name,
            'eta': self.eta,
            'size': self.size,
            'smoothness': self.smoothness,
            'smoothness_combined': self.smoothness_combined,
            'cancellation': self.cancellation,
            'cancellation_witness': self.cancellation_witness,
            'thresholds': self.thresholds,
            'passed': {
                'size': self.size_passed,
                'smoothness': self.smoothness_passed,
                'cancellation': self.cancellation_passed,
            },
            'samples': self.samples,
        }


def _entries(kernel: Kernel, space: Space, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise K(x_a[i], y_b[i])."""
    return np.array([kernel.evaluator(space, np.array([i]), np.array([j]))[0, 0] for i, j in zip(a, b)])


def validate_kernel(space: Space, kernel: Kernel, samples: int, seed: int = 0,
                    thresholds: Optional[Dict[str, float]] = None) -> KernelReport:
    """Sampled size, smoothness (per variable and combined) and two-sided annulus cancellation."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    kernel.check_space(space)
    rng = np.random.default_rng(seed)
    report = KernelReport(kernel.name, kernel.eta)
    report.thresholds = dict(thresholds or {})
    report.samples = samples
    eta, D = kernel.eta, space.D

    x = rng.integers(0, space.n, samples)
    y = rng.integers(0, space.n, samples)
    keep = x != y
    if keep.any():
        dist = space.pair_distances(x[keep], y[keep])
        values = np.abs(_entries(kernel, space, x[keep], y[keep]))
        report.size = float(np.max(dist ** D * values))

    # triples with rho(x, y) >= 2 rho(x, x') > 0
    pool = 8 * samples
    x = rng.integers(0, space.n, pool)
    xp = rng.integers(0, space.n, pool)
    y = rng.integers(0, space.n, pool)
    dxx = space.pair_distances(x, xp)
    dxy = space.pair_distances(x, y)
    keep = (dxx > 0) & (dxy >= 2 * dxx)
    x, xp, y = x[keep][:samples], xp[keep][:samples], y[keep][:samples]
    if x.size:
        dxx = space.pair_distances(x, xp)
        dxy = space.pair_distances(x, y)
        scale = dxx ** eta / dxy ** (D + eta)
        first = np.abs(_entries(kernel, space, x, y) - _entries(kernel, space, xp, y)) / scale
        second = np.abs(_entries(kernel, space, y, x) - _entries(kernel, space, y, xp)) / scale
        report.smoothness = float(max(first.max(), second.max()))
        report.smoothness_combined = float((first + second).max())

    # annulus integrals in y (K(x, .)) and in x (K(., y)) around hull-interior centers
    worst = 0.0
    spread = max(space.diameter() / 4.0, space.min_spacing())
    for attempt in range(samples):
        center = int(rng.integers(0, space.n))
        outer = float(rng.uniform(space.min_spacing(), spread))
        inner = float(rng.uniform(0.0, outer))
        if not space.ball_inside_hull(center, outer):
            continue
        d = space.distances_from(center)
        ring = np.flatnonzero((d > inner) & (d < outer))
        if ring.size == 0:
            continue
        w = space.weights[ring]
        for variable, row in (('y', kernel.matrix(space, [center], ring)[0]),
                              ('x', kernel.matrix(space, ring, [center])[:, 0])):
            value = abs(np.sum(row * w))
            if value > worst:
                worst = value
                report.cancellation_witness = {'center': center, 'r': inner, 'R': outer, 'variable': variable,
                                               'integral': float(value)}
    report.cancellation = float(worst)
    logger.info(f"Kernel {kernel.name}: size={report.size:.4g}, smoothness={report.smoothness:.4g}, "
                f"cancellation={report.cancellation:.3g}")
    return report


def list_kernels() -> List[str]:
    return list(KERNEL_NAMES)
