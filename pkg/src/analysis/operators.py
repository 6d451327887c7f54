"""
Operators - Averages, truncated singular integrals and their variational square functions
"""

import logging
from typing import Dict, Any, List, Optional, Tuple

import numpy as np

from core import settings
from core.errors import BudgetError, ScaleError
from core.parallel import chunk_ranges, ordered_map
from analysis.kernels import Kernel, dyadic_piece, partial_unity
from analysis.martingale import expectation
from analysis.variation import jump_count_batch, pad_rows, variation_batch
from geometry.dyadic import CubeSystem
from geometry.space import Space

logger = logging.getLogger(__name__)

MODES = ('averages', 'singular')


def check_kernel_budget(evaluations: float) -> None:
    if evaluations > settings.KERNEL_EVALUATION_BUDGET:
        raise BudgetError(f"{evaluations:.3g} kernel evaluations exceed the budget {settings.KERNEL_EVALUATION_BUDGET:.3g}")


def average(space: Space, f: np.ndarray, t: float, x: int) -> complex:
    """A_t f(x): weighted mean of f over the closed ball B(x, t)."""
    mask = space.distances_from(x) <= t
    w = space.weights[mask]
    return np.sum(np.asarray(f)[mask] * w) / w.sum()


def truncated_si(space: Space, kernel: Kernel, f: np.ndarray, t: float, x: int) -> complex:
    """T_t f(x): sum of K(x, y) f(y) dmu(y) over rho(x, y) > t."""
    if t <= 0:
        raise ScaleError(f"truncation radius must be positive, got {t}")
    mask = space.distances_from(x) > t
    cols = np.flatnonzero(mask)
    if cols.size == 0:
        return 0.0
    row = kernel.matrix(space, [x], cols)[0]
    return np.sum(row * np.asarray(f)[cols] * space.weights[cols])


class ProfileTable:
    """Breakpoints of t -> A_t f(x) and t -> T_t f(x) at every point, with the constant values between them."""

    def __init__(self, space: Space, f: np.ndarray, kernel: Optional[Kernel] = None, tolerance: float = 1e-12):
        self.space = space
        self.f = space.check_value(f)
        self.kernel = kernel
        self.tolerance = tolerance
        if kernel is not None:
            kernel.check_space(space)
            check_kernel_budget(float(space.n) * space.n)
        self.breaks: List[np.ndarray] = []
        self.averages: List[np.ndarray] = []
        self.singular: List[np.ndarray] = []
        for chunk in ordered_map(self._build, chunk_ranges(space.n, 64)):
            for breaks, avg, tsi in chunk:
                self.breaks.append(breaks)
                self.averages.append(avg)
                self.singular.append(tsi)

    def _build(self, rows: range) -> List[Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]]:
        space = self.space
        out = []
        dist = space.distances_between(rows)
        kernel_rows = self.kernel.matrix(space, rows) if self.kernel is not None else None
        fw = self.f * space.weights
        for r, x in enumerate(rows):
            d = dist[r]
            order = np.argsort(d, kind='stable')
            sorted_d = d[order]
            # close distances merge into one breakpoint
            gap = np.diff(sorted_d) > self.tolerance * max(sorted_d[-1], 1.0)
            ends = np.append(np.flatnonzero(gap), sorted_d.size - 1)
            starts = np.insert(ends[:-1] + 1, 0, 0)
            breaks = sorted_d[starts]
            mass = np.cumsum(space.weights[order])[ends]
            avg = np.cumsum(fw[order])[ends] / mass
            tsi = None
            if kernel_rows is not None:
                kfw = kernel_rows[r][order] * fw[order]
                tsi = np.sum(kfw) - np.cumsum(kfw)[ends]
            out.append((breaks, avg, tsi))
        return out

    def values(self, x: int, mode: str) -> np.ndarray:
        """The constant values on [b_j, b_{j+1}), in order of increasing t."""
        if mode == 'averages':
            return self.averages[x]
        if self.kernel is None:
            raise ValueError("singular profiles need a kernel")
        return self.singular[x]

    def value_at(self, x: int, t: float, mode: str) -> complex:
        """The profile evaluated at a radius t >= 0."""
        j = int(np.searchsorted(self.breaks[x], t, side='right')) - 1
        return self.values(x, mode)[max(j, 0)]

    def window(self, x: int, low: float, high: float, mode: str) -> np.ndarray:
        """Values of the profile over t in [low, high]: its value at low, then at each breakpoint in (low, high]."""
        breaks = self.breaks[x]
        values = self.values(x, mode)
        first = max(int(np.searchsorted(breaks, low, side='right')) - 1, 0)
        last = int(np.searchsorted(breaks, high, side='right')) - 1
        return values[first:max(last, first) + 1]

    def short_window(self, x: int, low: float, high: float, mode: str) -> np.ndarray:
        """Sequence whose variation is the short variation over [low, high] at x."""
        if mode == 'averages':
            return self.window(x, low, high, mode)
        # partial integral over low < rho < t equals T_low - T_b for the last breakpoint b < t
        breaks = self.breaks[x]
        values = self.singular[x]
        base = self.value_at(x, low, 'singular')
        first = int(np.searchsorted(breaks, low, side='left'))
        last = int(np.searchsorted(breaks, high, side='left'))
        inside = values[first:last]
        return np.concatenate([[0.0], base - inside]) if inside.size else np.zeros(1, dtype=values.dtype)


def variation_field(space: Space, f: np.ndarray, r: float, mode: str = 'averages', kernel: Optional[Kernel] = None,
                    homogeneous: bool = True, table: Optional[ProfileTable] = None) -> np.ndarray:
    """V^r over 0 < t < infinity of A_t f(x) or T_t f(x), at every point."""
    table = table or ProfileTable(space, f, kernel)

    def evaluate(rows: range) -> np.ndarray:
        return variation_batch(pad_rows([table.values(x, mode) for x in rows]), r, homogeneous=homogeneous)

    return np.concatenate(ordered_map(evaluate, chunk_ranges(space.n, 64)))


def jump_field(space: Space, f: np.ndarray, lam: float, mode: str = 'averages', kernel: Optional[Kernel] = None,
               table: Optional[ProfileTable] = None) -> np.ndarray:
    """lambda * sqrt(N_lambda) over 0 < t < infinity at every point."""
    table = table or ProfileTable(space, f, kernel)

    def evaluate(rows: range) -> np.ndarray:
        return jump_count_batch(pad_rows([table.values(x, mode) for x in rows]), lam)

    counts = np.concatenate(ordered_map(evaluate, chunk_ranges(space.n, 64)))
    return lam * np.sqrt(counts)


def smooth_truncation_sum(space: Space, kernel: Kernel, f: np.ndarray, k: int, kappa: float) -> np.ndarray:
    """T_k f = sum over y of K_k(x, y) f(y) dmu(y) at every point."""
    piece = dyadic_piece(kernel, k, kappa)
    check_kernel_budget(float(space.n) * space.n)
    fw = np.asarray(f) * space.weights

    def evaluate(rows: range) -> np.ndarray:
        return piece.matrix(space, rows) @ fw

    return np.concatenate(ordered_map(evaluate, chunk_ranges(space.n, 256)))


def k0_for_radius(r: float, kappa: float) -> int:
    """Least integer k0 with kappa^k0 > r."""
    k0 = int(np.floor(np.log(r) / np.log(kappa))) + 1
    while kappa ** (k0 - 1) > r:
        k0 -= 1
    while kappa ** k0 <= r:
        k0 += 1
    return k0


def split_truncation(space: Space, kernel: Kernel, f: np.ndarray, r: float, kappa: float) -> Dict[str, Any]:
    """T_r f = long - error + short with long = sum over k >= k0(r) of T_k f."""
    if r <= 0:
        raise ScaleError(f"truncation radius must be positive, got {r}")
    kernel.check_space(space)
    check_kernel_budget(float(space.n) * space.n)
    k0 = k0_for_radius(r, kappa)
    fw = np.asarray(f) * space.weights

    def evaluate(rows: range) -> Tuple[np.ndarray, ...]:
        rho = space.distances_between(rows)
        kf = kernel.matrix(space, rows) * fw[None, :]
        weight = partial_unity(rho, kappa, k0)
        long_part = np.sum(kf * weight, axis=1)
        error = np.sum(np.where(rho <= r, kf * weight, 0.0), axis=1)
        short = np.sum(np.where(rho > r, kf * (1.0 - weight), 0.0), axis=1)
        exact = np.sum(np.where(rho > r, kf, 0.0), axis=1)
        return long_part, error, short, exact

    parts = ordered_map(evaluate, chunk_ranges(space.n, 256))
    long_part, error, short, exact = (np.concatenate([p[i] for p in parts]) for i in range(4))
    return {
        'k0': k0,
        'long': long_part,
        'error': error,
        'short': short,
        'truncated': exact,
        'residual': float(np.max(np.abs(long_part - error + short - exact))) if space.n else 0.0,
    }


def _window_variations(table: ProfileTable, system: CubeSystem, f: np.ndarray, k: int, mode: str,
                       r: float) -> np.ndarray:
    kappa = system.kappa
    low, high = kappa ** (k - 1), kappa ** (k + 1)
    martingale = expectation(system, f, k) if mode == 'averages' else None

    def evaluate(rows: range) -> np.ndarray:
        windows = []
        for x in rows:
            seq = table.short_window(x, low, high, mode)
            windows.append(seq - martingale[x] if martingale is not None else seq)
        return variation_batch(pad_rows(windows), r, homogeneous=False)

    return np.concatenate(ordered_map(evaluate, chunk_ranges(table.space.n, 64)))


def short_variation(space: Space, system: CubeSystem, f: np.ndarray, k: int, mode: str = 'averages',
                    kernel: Optional[Kernel] = None, r: float = 2.0, aperture: float = 1.0,
                    table: Optional[ProfileTable] = None) -> np.ndarray:
    """S_k f(x) = sup over rho(x, x') <= aperture kappa^k of the r-variation over t in [kappa^(k-1), kappa^(k+1)]."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode}")
    if mode == 'singular' and kernel is None:
        raise ValueError("singular short variations need a kernel")
    system.check_scale(k)
    if system.kappa ** (k + 1) < space.min_spacing():
        raise ScaleError(f"scale window at k={k} is below the grid resolution")
    table = table or ProfileTable(space, f, kernel if mode == 'singular' else None)
    local = _window_variations(table, system, f, k, mode, r)
    reach = aperture * system.kappa ** k

    def spread(rows: range) -> np.ndarray:
        near = space.distances_between(rows) <= reach
        return np.max(np.where(near, local[None, :], 0.0), axis=1)

    return np.concatenate(ordered_map(spread, chunk_ranges(space.n, 256)))


def resolvable_scales(space: Space, system: CubeSystem) -> List[int]:
    """Scales whose window reaches the grid resolution."""
    return [k for k in system.scales if system.kappa ** (k + 1) >= space.min_spacing()]


def short_variation_square(space: Space, system: CubeSystem, f: np.ndarray, mode: str = 'averages',
                           kernel: Optional[Kernel] = None, r: float = 2.0, aperture: float = 1.0) -> np.ndarray:
    """S f = (sum over scales of (S_k f)^2)^(1/2)."""
    table = ProfileTable(space, f, kernel if mode == 'singular' else None)
    total = np.zeros(space.n)
    for k in resolvable_scales(space, system):
        total += short_variation(space, system, f, k, mode, kernel, r, aperture, table=table) ** 2
    return np.sqrt(total)


# Almost orthogonality

def power_iteration(matvec, size: int, max_iter: int = 2000, tol: float = 1e-10, seed: int = 0) -> float:
    """Dominant eigenvalue of a Hermitian positive semidefinite operator; residual stopping test."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=size)
    x = x / np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = matvec(x)
        y_norm = np.linalg.norm(y)
        if y_norm == 0:
            return 0.0
        lam_new = float(np.real(np.vdot(x, y)))
        x_new = y / y_norm
        residual = np.linalg.norm(matvec(x_new) - lam_new * x_new)
        x, lam = x_new, lam_new
        if residual < tol * max(abs(lam), 1.0):
            break
    return max(lam, 0.0)


def kernel_matrix(space: Space, kernel: Kernel) -> np.ndarray:
    """W^(1/2) K W^(1/2): the kernel operator in L^2(mu) coordinates."""
    if space.n * space.n > settings.MATRIX_ENTRY_BUDGET:
        raise BudgetError(f"a {space.n}x{space.n} matrix exceeds the matrix budget {settings.MATRIX_ENTRY_BUDGET}")
    root = np.sqrt(space.weights)
    return root[:, None] * kernel.matrix(space, np.arange(space.n)) * root[None, :]


def composed_norm(left: np.ndarray, right: np.ndarray, seed: int = 0) -> float:
    """||left @ right|| by power iteration on (left right)^H (left right)."""
    def matvec(v: np.ndarray) -> np.ndarray:
        return right.conj().T @ (left.conj().T @ (left @ (right @ v)))

    return float(np.sqrt(power_iteration(matvec, right.shape[1], seed=seed)))


def almost_orthogonality(space: Space, kernel: Kernel, k: int, k_prime: int, kappa: float, seed: int = 0,
                         matrices: Optional[Dict[int, np.ndarray]] = None) -> float:
    """||T_k'^* T_k|| + ||T_k' T_k^*|| for the smooth dyadic pieces."""
    kernel.check_space(space)
    matrices = {} if matrices is None else matrices
    for scale in (k, k_prime):
        if scale not in matrices:
            matrices[scale] = kernel_matrix(space, dyadic_piece(kernel, scale, kappa))
    b, b_prime = matrices[k], matrices[k_prime]
    return composed_norm(b_prime.conj().T, b, seed) + composed_norm(b_prime, b.conj().T, seed)
