"""
Fitting - Log-log regression for measured exponents
"""

import logging
from typing import Dict, Any, Sequence

import numpy as np
from sklearn.linear_model import LinearRegression

logger = logging.getLogger(__name__)


class PowerLawFit:
    """Result of fitting y ≈ constant * x**exponent."""

    def __init__(self, exponent: float, constant: float, residual: float, count: int):
        self.exponent = exponent
        self.constant = constant
        self.residual = residual
        self.count = count

    def to_dict(self) -> Dict[str, Any]:
        """Convert fit to dictionary."""
        return {
            'exponent': self.exponent,
            'constant': self.constant,
            'residual': self.residual,
            'count': self.count,
        }


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> PowerLawFit:
    """Least-squares fit of log y against log x. Nonpositive pairs are dropped."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if keep.sum() < 2 or np.unique(x[keep]).size < 2:
        logger.warning(f"Power-law fit needs two distinct positive samples, got {int(keep.sum())}")
        return PowerLawFit(float('nan'), float('nan'), float('nan'), int(keep.sum()))

    log_x = np.log(x[keep]).reshape(-1, 1)
    log_y = np.log(y[keep])
    model = LinearRegression()
    model.fit(log_x, log_y)
    predicted = model.predict(log_x)
    residual = float(np.sqrt(np.mean((predicted - log_y) ** 2)))
    return PowerLawFit(float(model.coef_[0]), float(np.exp(model.intercept_)), residual, int(keep.sum()))


def fit_exponential_decay(gaps: Sequence[float], norms: Sequence[float], base: float = 2.0) -> PowerLawFit:
    """Fit norms ≈ constant * base**(-exponent * gap); the exponent is the decay rate."""
    gaps = np.asarray(gaps, dtype=float).ravel()
    norms = np.asarray(norms, dtype=float).ravel()
    keep = (norms > 0) & np.isfinite(norms)
    if keep.sum() < 2 or np.unique(gaps[keep]).size < 2:
        return PowerLawFit(float('nan'), float('nan'), float('nan'), int(keep.sum()))

    log_norms = np.log(norms[keep]) / np.log(base)
    model = LinearRegression()
    model.fit(gaps[keep].reshape(-1, 1), log_norms)
    predicted = model.predict(gaps[keep].reshape(-1, 1))
    residual = float(np.sqrt(np.mean((predicted - log_norms) ** 2)))
    return PowerLawFit(float(-model.coef_[0]), float(base ** model.intercept_), residual, int(keep.sum()))
