"""
Space - Finite discretizations of spaces of homogeneous type
"""

import logging
from typing import Dict, Any, List, Optional, Sequence

import numpy as np

from core import settings
from core.errors import BudgetError, DocumentError, RegularityError, ScaleError
from analysis.fitting import fit_power_law

logger = logging.getLogger(__name__)

KINDS = ('euclidean', 'heisenberg', 'points')


def heisenberg_product(g: Sequence[float], h: Sequence[float]) -> np.ndarray:
    """Group law (x,y,t)(x',y',t') = (x+x', y+y', t+t'+(xy'-yx')/2)."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    return np.array([
        g[0] + h[0],
        g[1] + h[1],
        g[2] + h[2] + 0.5 * (g[0] * h[1] - g[1] * h[0]),
    ])


def heisenberg_inverse(g: Sequence[float]) -> np.ndarray:
    """Group inverse."""
    return -np.asarray(g, dtype=float)


def heisenberg_dilate(g: Sequence[float], s: float) -> np.ndarray:
    """Dilation (x,y,t) -> (sx, sy, s^2 t)."""
    g = np.asarray(g, dtype=float)
    return np.array([s * g[0], s * g[1], s * s * g[2]])


def heisenberg_gauge(g, tau: float = settings.HEISENBERG_TAU) -> np.ndarray:
    """Homogeneous gauge ((x^2+y^2)^2 + tau t^2)^(1/4); works row-wise on arrays."""
    g = np.asarray(g, dtype=float)
    x, y, t = g[..., 0], g[..., 1], g[..., 2]
    planar = x * x + y * y
    return (planar * planar + tau * t * t) ** 0.25


def _heisenberg_rows(g: np.ndarray, hs: np.ndarray, tau: float) -> np.ndarray:
    # gauge(h^-1 g); exactly antisymmetric increments so rho is exactly symmetric
    dx = g[..., 0] - hs[..., 0]
    dy = g[..., 1] - hs[..., 1]
    dt = (g[..., 2] - hs[..., 2]) + 0.5 * (hs[..., 1] * g[..., 0] - hs[..., 0] * g[..., 1])
    planar = dx * dx + dy * dy
    return (planar * planar + tau * dt * dt) ** 0.25


class RegularityReport:
    """Measured ball-growth constants of a space."""

    def __init__(self):
        self.radii: List[float] = []
        self.centers: List[int] = []
        self.clipped_radii: List[float] = []
        self.min_ratio = float('nan')
        self.max_ratio = float('nan')
        self.exponent = float('nan')
        self.fit_residual = float('nan')
        self.dimension = float('nan')

    def to_dict(self) -> Dict[str, Any]:
        """Convert report to dictionary."""
        return {
            'radii': self.radii,
            'centers': self.centers,
            'clipped_radii': self.clipped_radii,
            'c': self.min_ratio,
            'C': self.max_ratio,
            'exponent': self.exponent,
            'fit_residual': self.fit_residual,
            'D': self.dimension,
        }


class HolderReport:
    """Worst sampled ratio of the Hölder-type metric condition."""

    def __init__(self, eta: float):
        self.eta = eta
        self.value = 0.0
        self.samples_used = 0
        self.skipped = 0
        self.witness: Optional[List[int]] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert report to dictionary."""
        return {
            'eta': self.eta,
            'value': self.value,
            'samples_used': self.samples_used,
            'skipped': self.skipped,
            'witness': self.witness,
        }


class QuasiTriangleReport:
    """Measured quasi-triangle constant on sampled triples."""

    def __init__(self, declared: float):
        self.declared = declared
        self.measured = 0.0
        self.violations = 0
        self.samples = 0
        self.witness: Optional[List[int]] = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> Dict[str, Any]:
        """Convert report to dictionary."""
        return {
            'declared_A0': self.declared,
            'measured_A0': self.measured,
            'violations': self.violations,
            'samples': self.samples,
            'witness': self.witness,
            'passed': self.passed,
        }


class Space:
    """A finite weighted point cloud with a quasi-metric and structural constants."""

    def __init__(self, kind: str, coords: np.ndarray, weights: np.ndarray,
                 A0: float = 1.0, D: float = 1.0, spacing: Optional[float] = None,
                 side_count: Optional[int] = None, dimension: Optional[int] = None,
                 centered: bool = False, lattice: Optional[np.ndarray] = None,
                 tau: float = settings.HEISENBERG_TAU):
        if kind not in KINDS:
            raise DocumentError(f"Unknown space kind: {kind}")
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords.reshape(-1, 1)
        weights = np.asarray(weights, dtype=float).ravel()
        if coords.shape[0] != weights.shape[0]:
            raise DocumentError("coords and weights have different lengths")
        if coords.shape[0] == 0:
            raise DocumentError("a space needs at least one point")
        if coords.shape[0] > settings.POINT_BUDGET:
            raise BudgetError(f"{coords.shape[0]} points exceed the point budget {settings.POINT_BUDGET}")
        if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
            raise DocumentError("weights must be finite and strictly positive")

        self.kind = kind
        self.coords = coords
        self.weights = weights
        self.A0 = float(A0)
        self.D = float(D)
        self.spacing = spacing
        self.side_count = side_count
        self.dimension = dimension if dimension is not None else coords.shape[1]
        self.centered = centered
        self.lattice = lattice
        self.tau = float(tau)
        self.coords.setflags(write=False)
        self.weights.setflags(write=False)
        self._matrix: Optional[np.ndarray] = None
        self._diameter: Optional[float] = None
        self._diameter_method = ''
        self._min_spacing: Optional[float] = None

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def __len__(self) -> int:
        return self.n

    # Metric

    def _rows(self, origin: np.ndarray, others: np.ndarray) -> np.ndarray:
        if self.kind == 'heisenberg':
            return _heisenberg_rows(origin, others, self.tau)
        diff = origin - others
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def distances_from(self, i: int) -> np.ndarray:
        """rho(x_i, y) for every point y."""
        if self._matrix is not None:
            return self._matrix[i]
        return self._rows(self.coords[i], self.coords)

    def distances_between(self, rows: Sequence[int], cols: Optional[Sequence[int]] = None) -> np.ndarray:
        """Distance block rho(x_rows, x_cols)."""
        rows = np.asarray(rows, dtype=int)
        cols = np.arange(self.n) if cols is None else np.asarray(cols, dtype=int)
        if self._matrix is not None:
            return self._matrix[np.ix_(rows, cols)]
        return self._rows(self.coords[rows][:, None, :], self.coords[cols][None, :, :])

    def pair_distances(self, a: Sequence[int], b: Sequence[int]) -> np.ndarray:
        """Elementwise rho(x_a[k], x_b[k])."""
        a = np.asarray(a, dtype=int)
        b = np.asarray(b, dtype=int)
        return self._rows(self.coords[a], self.coords[b])

    def distance(self, i: int, j: int) -> float:
        return float(self.pair_distances([i], [j])[0])

    def distance_matrix(self) -> np.ndarray:
        """Dense distance matrix, cached for small spaces."""
        if self._matrix is not None:
            return self._matrix
        if self.n * self.n > settings.MATRIX_ENTRY_BUDGET * 4:
            raise BudgetError(f"Dense distance matrix for {self.n} points exceeds the matrix budget")
        matrix = self._rows(self.coords[:, None, :], self.coords[None, :, :])
        matrix.setflags(write=False)
        if self.n <= settings.DENSE_DISTANCE_LIMIT:
            self._matrix = matrix
        return matrix

    # Measure

    def ball(self, i: int, r: float) -> np.ndarray:
        """Indices of the closed ball B(x_i, r)."""
        return np.flatnonzero(self.distances_from(i) <= r)

    def ball_measure(self, i: int, r: float) -> float:
        return float(self.weights[self.distances_from(i) <= r].sum())

    def integral(self, values: np.ndarray, subset: Optional[np.ndarray] = None) -> complex:
        """Sum of f(x) * weight(x), over a subset when given."""
        values = np.asarray(values)
        if subset is None:
            return np.sum(values * self.weights)
        return np.sum(values[subset] * self.weights[subset])

    def total_measure(self) -> float:
        return float(self.weights.sum())

    # Shape

    def min_spacing(self) -> float:
        """Smallest distance between two distinct points."""
        if self._min_spacing is None:
            if self.kind == 'euclidean' and self.spacing:
                self._min_spacing = float(self.spacing)
            elif self.kind == 'heisenberg' and self.spacing:
                self._min_spacing = float(min(self.spacing, self.tau ** 0.25 * self.spacing))
            elif self.n == 1:
                self._min_spacing = float('inf')
            else:
                best = np.inf
                for start in range(0, self.n, 256):
                    block = self.distances_between(range(start, min(start + 256, self.n)))
                    block = np.where(block > 0, block, np.inf)
                    best = min(best, float(block.min()))
                self._min_spacing = best
        return self._min_spacing

    def diameter(self) -> float:
        """Exact diameter when cheap, otherwise a double-sweep lower bound."""
        if self._diameter is None:
            if self.kind == 'euclidean' and self.side_count:
                self._diameter = float((self.side_count - 1) * self.spacing * np.sqrt(self.dimension))
                self._diameter_method = 'closed-form'
            elif self.n <= settings.EXACT_DIAMETER_LIMIT:
                best = 0.0
                for start in range(0, self.n, 256):
                    block = self.distances_between(range(start, min(start + 256, self.n)))
                    best = max(best, float(block.max()))
                self._diameter = best
                self._diameter_method = 'exact'
            else:
                far = int(np.argmax(self.distances_from(0)))
                self._diameter = float(self.distances_from(far).max())
                self._diameter_method = 'double-sweep'
        return self._diameter

    @property
    def diameter_method(self) -> str:
        self.diameter()
        return self._diameter_method

    def nearest_point(self, coord: Sequence[float]) -> int:
        """Index of the point closest to an arbitrary coordinate (lowest id on ties)."""
        coord = np.asarray(coord, dtype=float).reshape(1, -1)
        return int(np.argmin(self._rows(coord[0], self.coords)))

    def ball_inside_hull(self, i: int, r: float) -> bool:
        """Whether B(x_i, r) lies inside the coordinate box of the lattice."""
        low = self.coords.min(axis=0)
        high = self.coords.max(axis=0)
        c = self.coords[i]
        if self.kind == 'heisenberg':
            reach = np.array([r, r, r * r / np.sqrt(self.tau) + 0.5 * (abs(c[0]) + abs(c[1])) * r])
        else:
            reach = np.full(c.shape, r)
        return bool(np.all(c - reach >= low) and np.all(c + reach <= high))

    def check_value(self, values: np.ndarray) -> np.ndarray:
        """Validate a grid function against this space."""
        values = np.asarray(values)
        if values.shape != (self.n,):
            raise ValueError(f"grid function has shape {values.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function has non-finite values")
        return values

    # Serialization

    def to_dict(self) -> Dict[str, Any]:
        """Versioned document; grid kinds regenerate points from these fields."""
        data = {
            'schema': settings.SPACE_SCHEMA,
            'kind': self.kind,
            'dimension': int(self.dimension),
            'side_count': self.side_count,
            'spacing': self.spacing,
            'A0': self.A0,
            'D': self.D,
        }
        if self.centered:
            data['centered'] = True
        if self.kind == 'points':
            data['coords'] = self.coords.tolist()
            data['weights'] = self.weights.tolist()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Space':
        """Rebuild a space from its document."""
        kind = data.get('kind')
        try:
            if kind == 'euclidean':
                return build_euclidean_grid(int(data['dimension']), int(data['side_count']),
                                            float(data['spacing']), centered=bool(data.get('centered', False)))
            if kind == 'heisenberg':
                return build_heisenberg_grid(int(data['side_count']), float(data['spacing']))
            if kind == 'points':
                return cls('points', np.asarray(data['coords'], dtype=float), np.asarray(data['weights'], dtype=float),
                           A0=float(data.get('A0', 1.0)), D=float(data.get('D', 1.0)))
        except KeyError as e:
            raise DocumentError(f"space document is missing field {e}")
        raise DocumentError(f"Unknown space kind: {kind}")


def _check_budget(count: int) -> None:
    if count > settings.POINT_BUDGET:
        raise BudgetError(f"{count} points exceed the point budget {settings.POINT_BUDGET}")


def build_euclidean_grid(dimension: int, side_count: int, spacing: float, centered: bool = False) -> Space:
    """Lattice of side_count^dimension points with Euclidean distance and cell weights spacing^dimension."""
    if dimension not in (1, 2):
        raise ScaleError(f"Euclidean grids support dimension 1 or 2, got {dimension}")
    if side_count < 2:
        raise ScaleError(f"side_count must be at least 2, got {side_count}")
    if spacing <= 0:
        raise ScaleError(f"spacing must be positive, got {spacing}")
    _check_budget(side_count ** dimension)

    offset = side_count // 2 if centered else 0
    axis = np.arange(side_count) - offset
    if dimension == 1:
        lattice = axis.reshape(-1, 1)
    else:
        ii, jj = np.meshgrid(axis, axis, indexing='ij')
        lattice = np.stack([ii.ravel(), jj.ravel()], axis=1)
    coords = lattice * float(spacing)
    weights = np.full(coords.shape[0], float(spacing) ** dimension)
    logger.debug(f"Built euclidean grid: dimension={dimension}, points={coords.shape[0]}")
    return Space('euclidean', coords, weights, A0=1.0, D=float(dimension), spacing=float(spacing),
                 side_count=side_count, dimension=dimension, centered=centered, lattice=lattice)


def build_heisenberg_grid(side_count: int, spacing: float) -> Space:
    """Centered Heisenberg lattice: x, y at spacing, t at spacing^2, Haar weight spacing^4."""
    if side_count < 2:
        raise ScaleError(f"side_count must be at least 2, got {side_count}")
    if spacing <= 0:
        raise ScaleError(f"spacing must be positive, got {spacing}")
    _check_budget(side_count ** 3)

    axis = np.arange(side_count) - side_count // 2
    ii, jj, ll = np.meshgrid(axis, axis, axis, indexing='ij')
    lattice = np.stack([ii.ravel(), jj.ravel(), ll.ravel()], axis=1)
    s = float(spacing)
    coords = lattice * np.array([s, s, s * s])
    weights = np.full(coords.shape[0], s ** 4)
    # Cygan-Koranyi gauge with tau=16 is a genuine metric
    a0 = 1.0 if settings.HEISENBERG_TAU == 16.0 else 2.0
    logger.debug(f"Built heisenberg grid: points={coords.shape[0]}")
    return Space('heisenberg', coords, weights, A0=a0, D=4.0, spacing=s, side_count=side_count,
                 dimension=3, centered=True, lattice=lattice)


def from_points(coords: Sequence, weights: Optional[Sequence[float]] = None, D: Optional[float] = None) -> Space:
    """Arbitrary Euclidean point cloud; unit weights by default."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords.reshape(-1, 1)
    if weights is None:
        weights = np.ones(coords.shape[0])
    return Space('points', coords, np.asarray(weights, dtype=float), A0=1.0,
                 D=float(coords.shape[1] if D is None else D))


def _sample_centers(space: Space, sample_centers: Optional[Sequence[int]], count: int, seed: int) -> np.ndarray:
    if sample_centers is not None:
        return np.asarray(list(sample_centers), dtype=int)
    rng = np.random.default_rng(seed)
    return rng.choice(space.n, size=min(count, space.n), replace=False)


def check_regularity(space: Space, radii: Sequence[float], sample_centers: Optional[Sequence[int]] = None,
                     seed: int = 0) -> RegularityReport:
    """Measure c, C in c r^D <= mu(B(x,r)) <= C r^D and the fitted growth exponent."""
    radii = np.asarray(list(radii), dtype=float)
    if radii.size == 0 or np.any(radii <= 0):
        raise RegularityError("radii must be a nonempty list of positive numbers")
    low, high = 2.0 * space.min_spacing(), space.diameter() / 4.0
    if np.any(radii < low * (1 - 1e-12)) or np.any(radii > high * (1 + 1e-12)):
        raise ScaleError(f"radii must lie in [{low}, {high}]")

    centers = _sample_centers(space, sample_centers, 32, seed)
    clipped: List[float] = []
    if sample_centers is None:
        # the most central point always joins; radii whose ball leaves the hull there are dropped
        central = space.nearest_point(0.5 * (space.coords.min(axis=0) + space.coords.max(axis=0)))
        centers = np.append(centers[centers != central], central)
        fits = np.array([space.ball_inside_hull(central, float(r)) for r in radii])
        clipped = radii[~fits].tolist()
        radii = radii[fits]
        if radii.size == 0:
            raise RegularityError("no radius fits inside the lattice hull around its central point")
        if clipped:
            logger.warning(f"Regularity: dropped radii beyond the lattice hull: {clipped}")
    r_max = float(radii.max())
    usable = [int(c) for c in centers if space.ball_inside_hull(int(c), r_max)]
    if not usable:
        raise RegularityError("no sample center has its largest ball inside the lattice hull")

    measures = np.array([[space.ball_measure(c, r) for r in radii] for c in usable])
    ratios = measures / radii[None, :] ** space.D
    report = RegularityReport()
    report.radii = radii.tolist()
    report.centers = usable
    report.clipped_radii = clipped
    report.dimension = space.D
    report.min_ratio = float(ratios.min())
    report.max_ratio = float(ratios.max())
    fit = fit_power_law(np.tile(radii, len(usable)), measures.ravel())
    report.exponent = fit.exponent
    report.fit_residual = fit.residual
    logger.info(f"Regularity: c={report.min_ratio:.4g}, C={report.max_ratio:.4g}, exponent={report.exponent:.4f}")
    return report


def _random_triples(space: Space, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    return (rng.integers(0, space.n, samples), rng.integers(0, space.n, samples), rng.integers(0, space.n, samples))


def check_holder_metric(space: Space, eta: float, samples: int, seed: int = 0) -> HolderReport:
    """Worst |rho(x,z)-rho(y,z)| / (max(rho(x,z),rho(y,z))^(1-eta) rho(x,y)^eta) on random triples."""
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    if samples < 1:
        raise ValueError("samples must be at least 1")

    x, y, z = _random_triples(space, samples, seed)
    report = HolderReport(eta)
    keep = (x != z) & (y != z)
    report.skipped = int((~keep).sum())
    x, y, z = x[keep], y[keep], z[keep]
    report.samples_used = int(x.size)
    if x.size == 0:
        return report

    dxz = space.pair_distances(x, z)
    dyz = space.pair_distances(y, z)
    dxy = space.pair_distances(x, y)
    numerator = np.abs(dxz - dyz)
    denominator = np.maximum(dxz, dyz) ** (1.0 - eta) * dxy ** eta
    values = np.where(x == y, 0.0, numerator / np.where(denominator > 0, denominator, 1.0))
    worst = int(np.argmax(values))
    report.value = float(values[worst])
    report.witness = [int(x[worst]), int(y[worst]), int(z[worst])]
    return report


def check_quasi_triangle(space: Space, samples: int, seed: int = 0) -> QuasiTriangleReport:
    """Measured rho(x,y) / (rho(x,z) + rho(z,y)) on random triples against the declared A0."""
    x, y, z = _random_triples(space, samples, seed)
    report = QuasiTriangleReport(space.A0)
    report.samples = int(samples)
    dxy = space.pair_distances(x, y)
    bound = space.pair_distances(x, z) + space.pair_distances(z, y)
    ratios = np.where(bound > 0, dxy / np.where(bound > 0, bound, 1.0), 0.0)
    report.measured = float(ratios.max()) if ratios.size else 0.0
    bad = dxy > space.A0 * bound * (1.0 + settings.DISTANCE_RTOL)
    report.violations = int(bad.sum())
    if report.violations:
        k = int(np.flatnonzero(bad)[0])
        report.witness = [int(x[k]), int(y[k]), int(z[k])]
    return report


def check_doubling(space: Space, radii: Sequence[float], sample_centers: Optional[Sequence[int]] = None,
                   seed: int = 0) -> float:
    """Measured doubling constant max mu(B(x,2r)) / mu(B(x,r))."""
    radii = np.asarray(list(radii), dtype=float)
    if radii.size == 0 or np.any(radii <= 0):
        raise RegularityError("radii must be a nonempty list of positive numbers")
    centers = _sample_centers(space, sample_centers, 32, seed)
    worst = 0.0
    used = 0
    for c in centers:
        c = int(c)
        fitting = [float(r) for r in radii if space.ball_inside_hull(c, 2 * float(r))]
        if not fitting:
            continue
        used += 1
        d = space.distances_from(c)
        for r in fitting:
            worst = max(worst, float(space.weights[d <= 2 * r].sum() / space.weights[d <= r].sum()))
    if used == 0:
        raise RegularityError("no sample center has its doubled ball inside the lattice hull")
    return worst
