"""
Variation - Exact r-variation and lambda-jump counts of finite sequences
"""

import logging
from typing import Dict, Any, Optional, Sequence, Tuple, Union

import numpy as np

from core import settings

logger = logging.getLogger(__name__)


class Sample:
    """Values a_t on strictly increasing parameters t_0 < ... < t_n."""

    def __init__(self, values: Sequence, params: Optional[Sequence[float]] = None):
        values = np.asarray(values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("a sample needs a nonempty one-dimensional value list")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample values must be finite")
        if params is None:
            params = np.arange(values.size, dtype=float)
        params = np.asarray(params, dtype=float)
        if params.shape != values.shape:
            raise ValueError("params and values have different lengths")
        if np.any(np.diff(params) <= 0):
            raise ValueError("sample parameters must be strictly increasing")
        self.params = params
        self.values = values

    def __len__(self) -> int:
        return self.values.size

    def to_dict(self) -> Dict[str, Any]:
        """Convert sample to dictionary."""
        values = self.values
        if np.iscomplexobj(values):
            values = {'real': values.real.tolist(), 'imag': values.imag.tolist()}
        else:
            values = values.tolist()
        return {'params': self.params.tolist(), 'values': values}


SampleLike = Union[Sample, Sequence, np.ndarray]


def _values(sample: SampleLike) -> np.ndarray:
    if isinstance(sample, Sample):
        return sample.values
    return Sample(sample).values


def _gaps(values: np.ndarray, i: int) -> np.ndarray:
    """|a_i - a_j| for every j < i."""
    return np.abs(values[i] - values[:i])


def _increment_row(values: np.ndarray, i: int, r: float) -> np.ndarray:
    return _gaps(values, i) ** r


def _root(total: float, r: float) -> float:
    return float(total ** (1.0 / r))


def _check_r(r: float) -> None:
    if r < 1:
        raise ValueError(f"r-variation needs r >= 1, got {r}")


def r_variation(sample: SampleLike, r: float, homogeneous: bool = True) -> float:
    """sup over increasing subsequences of (sum |a_j - a_{j-1}|^r)^(1/r); adds sup |a| when inhomogeneous."""
    _check_r(r)
    values = _values(sample)
    n = values.size
    if n > settings.VARIATION_LENGTH_CAP:
        raise ValueError(f"sample length {n} exceeds the cap {settings.VARIATION_LENGTH_CAP}")

    best = np.zeros(n)
    for i in range(1, n):
        best[i] = np.max(best[:i] + _increment_row(values, i, r))
    value = _root(float(best.max()), r)
    if not homogeneous:
        value += float(np.abs(values).max())
    return value


def jump_count(sample: SampleLike, lam: float) -> int:
    """N_lambda: longest chain t_0 < ... < t_J with every |a_{t_j} - a_{t_{j-1}}| > lambda."""
    if lam <= 0:
        raise ValueError(f"jump size must be positive, got {lam}")
    values = _values(sample)
    n = values.size
    if n > settings.VARIATION_LENGTH_CAP:
        raise ValueError(f"sample length {n} exceeds the cap {settings.VARIATION_LENGTH_CAP}")

    chain = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        reachable = _gaps(values, i) > lam
        if reachable.any():
            chain[i] = chain[:i][reachable].max() + 1
    return int(chain.max())


def oracle_variation_jump(sample: SampleLike, r: float, lam: float, homogeneous: bool = True) -> Tuple[float, int]:
    """Exhaustive enumeration of every increasing subsequence; exponential, for short samples only."""
    _check_r(r)
    if lam <= 0:
        raise ValueError(f"jump size must be positive, got {lam}")
    values = _values(sample)
    n = values.size
    if n > settings.ORACLE_LENGTH_CAP:
        raise ValueError(f"oracle is limited to {settings.ORACLE_LENGTH_CAP} values, got {n}")

    increments = [_increment_row(values, i, r) for i in range(n)]
    gaps = [_gaps(values, i) for i in range(n)]
    best_sum = 0.0
    best_jumps = 0

    # every path visited once, sums accumulated left to right
    stack = [(i, 0.0, 0, True) for i in range(n)]
    while stack:
        last, total, jumps, chained = stack.pop()
        best_sum = max(best_sum, total)
        if chained:
            best_jumps = max(best_jumps, jumps)
        for nxt in range(last + 1, n):
            step_chained = chained and bool(gaps[nxt][last] > lam)
            stack.append((nxt, total + increments[nxt][last], jumps + 1, step_chained))

    variation = _root(best_sum, r)
    if not homogeneous:
        variation += float(np.abs(values).max())
    return variation, best_jumps


def jump_variation_lower_bound(sample: SampleLike, r: float, lam: float) -> float:
    """lambda * N_lambda^(1/r), never above the homogeneous r-variation."""
    return lam * jump_count(sample, lam) ** (1.0 / r)


def lepingle_ladder(sample: SampleLike, lambdas: Sequence[float]) -> np.ndarray:
    """lambda * sqrt(N_lambda) along a ladder of jump sizes."""
    return np.array([lam * np.sqrt(jump_count(sample, lam)) for lam in lambdas])


# Batched forms over the rows of a matrix. Rows are padded by repeating their last value,
# which changes neither the variation nor the jump count.

def _check_batch(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("batched evaluation needs a two-dimensional array")
    if matrix.shape[1] > settings.VARIATION_LENGTH_CAP:
        raise ValueError(f"row length {matrix.shape[1]} exceeds the cap {settings.VARIATION_LENGTH_CAP}")
    return matrix


def pad_rows(rows: Sequence[np.ndarray]) -> np.ndarray:
    """Stack ragged rows, repeating each row's last value."""
    width = max(len(row) for row in rows)
    dtype = np.result_type(*[np.asarray(row).dtype for row in rows])
    out = np.empty((len(rows), width), dtype=dtype)
    for i, row in enumerate(rows):
        row = np.asarray(row)
        out[i, :row.size] = row
        out[i, row.size:] = row[-1]
    return out


def variation_power_batch(matrix: np.ndarray, r: float) -> np.ndarray:
    """r-th power of the homogeneous r-variation of every row."""
    _check_r(r)
    matrix = _check_batch(matrix)
    rows, width = matrix.shape
    best = np.zeros((rows, width))
    for i in range(1, width):
        step = np.abs(matrix[:, i:i + 1] - matrix[:, :i]) ** r
        best[:, i] = np.max(best[:, :i] + step, axis=1)
    return best.max(axis=1) if width else np.zeros(rows)


def variation_batch(matrix: np.ndarray, r: float, homogeneous: bool = True) -> np.ndarray:
    """Row-wise r-variation."""
    matrix = _check_batch(matrix)
    value = variation_power_batch(matrix, r) ** (1.0 / r)
    if not homogeneous:
        value = value + np.abs(matrix).max(axis=1)
    return value


def jump_count_batch(matrix: np.ndarray, lam: float) -> np.ndarray:
    """Row-wise N_lambda."""
    if lam <= 0:
        raise ValueError(f"jump size must be positive, got {lam}")
    matrix = _check_batch(matrix)
    rows, width = matrix.shape
    chain = np.zeros((rows, width), dtype=np.int64)
    for i in range(1, width):
        reachable = np.abs(matrix[:, i:i + 1] - matrix[:, :i]) > lam
        chain[:, i] = np.max(np.where(reachable, chain[:, :i] + 1, 0), axis=1)
    return chain.max(axis=1) if width else np.zeros(rows, dtype=np.int64)


def suffix_variation_powers(values: np.ndarray, r: float) -> np.ndarray:
    """S[s] = r-th power of the variation of values[s:], for every start s."""
    _check_r(r)
    values = np.asarray(values)
    n = values.size
    best = np.zeros(n)
    for j in range(n - 2, -1, -1):
        step = np.abs(values[j + 1:] - values[j]) ** r
        best[j] = np.max(step + best[j + 1:])
    return np.maximum.accumulate(best[::-1])[::-1]


def suffix_jump_counts(values: np.ndarray, lam: float) -> np.ndarray:
    """N[s] = jump count of values[s:], for every start s."""
    if lam <= 0:
        raise ValueError(f"jump size must be positive, got {lam}")
    values = np.asarray(values)
    n = values.size
    chain = np.zeros(n, dtype=np.int64)
    for j in range(n - 2, -1, -1):
        reachable = np.abs(values[j + 1:] - values[j]) > lam
        if reachable.any():
            chain[j] = chain[j + 1:][reachable].max() + 1
    return np.maximum.accumulate(chain[::-1])[::-1]


def suffix_variation_powers_batch(matrix: np.ndarray, r: float) -> np.ndarray:
    """Row-wise suffix_variation_powers; rows padded at the end by repeating their last value."""
    _check_r(r)
    matrix = _check_batch(matrix)
    rows, width = matrix.shape
    best = np.zeros((rows, width))
    for j in range(width - 2, -1, -1):
        step = np.abs(matrix[:, j + 1:] - matrix[:, j:j + 1]) ** r
        best[:, j] = np.max(step + best[:, j + 1:], axis=1)
    return np.maximum.accumulate(best[:, ::-1], axis=1)[:, ::-1]


def suffix_jump_counts_batch(matrix: np.ndarray, lam: float) -> np.ndarray:
    """Row-wise suffix_jump_counts."""
    if lam <= 0:
        raise ValueError(f"jump size must be positive, got {lam}")
    matrix = _check_batch(matrix)
    rows, width = matrix.shape
    chain = np.zeros((rows, width), dtype=np.int64)
    for j in range(width - 2, -1, -1):
        reachable = np.abs(matrix[:, j + 1:] - matrix[:, j:j + 1]) > lam
        chain[:, j] = np.max(np.where(reachable, chain[:, j + 1:] + 1, 0), axis=1)
    return np.maximum.accumulate(chain[:, ::-1], axis=1)[:, ::-1]
