"""
Sparse - Carleson certificates, sparse operators, pair functionals and the stopping-time construction
"""

import logging
from typing import Callable, Dict, Any, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import ConstructionError
from analysis.operators import ProfileTable
from analysis.variation import (pad_rows, suffix_jump_counts_batch, suffix_variation_powers_batch)
from geometry.dyadic import Cube, CubeSystem

logger = logging.getLogger(__name__)


def _check_members(system: CubeSystem, family: Sequence[Cube]) -> None:
    for cube in family:
        if cube.scale not in system.cubes or cube.index >= len(system.cubes[cube.scale]):
            raise ConstructionError(f"cube {cube.identifier} is not in the system")
        own = system.cubes[cube.scale][cube.index]
        if own is not cube and not np.array_equal(np.sort(own.members), np.sort(cube.members)):
            raise ConstructionError(f"cube {cube.identifier} is not in the system")


def _unique(family: Sequence[Cube]) -> List[Cube]:
    seen = set()
    out = []
    for cube in family:
        if cube.identifier not in seen:
            seen.add(cube.identifier)
            out.append(cube)
    return out


def carleson_constant(system: CubeSystem, family: Sequence[Cube]) -> float:
    """max over dyadic Q of sum of mu(Q') over family cubes Q' contained in Q as sets, over mu(Q)."""
    _check_members(system, family)
    family = _unique(family)
    if not family:
        return 0.0
    own = {k: np.zeros(len(system.cubes[k])) for k in system.scales}
    for cube in family:
        own[cube.scale][cube.index] += cube.measure

    # family mass inside each cube at its own or finer scales
    below = {}
    for k in system.scales:
        total = own[k].copy()
        if k > system.k_min:
            parents = np.array([c.parent for c in system.cubes[k - 1]], dtype=np.int64)
            total += np.bincount(parents, weights=below[k - 1], minlength=total.size)
        below[k] = total

    # coarser family cubes with the same member set (only-child chains)
    above = {system.k_max: np.zeros(len(system.cubes[system.k_max]))}
    for k in range(system.k_max - 1, system.k_min - 1, -1):
        values = np.zeros(len(system.cubes[k]))
        for cube in system.cubes[k]:
            parent = system.cubes[k + 1][cube.parent]
            if len(parent.children) == 1:
                values[cube.index] = own[k + 1][parent.index] + above[k + 1][parent.index]
        above[k] = values

    return float(max(np.max((below[k] + above[k]) / system.measures[k]) for k in system.scales))


class SparseWitness:
    """Disjoint sets E(Q) or the cube that blocked them."""

    def __init__(self, eta_s: float):
        self.eta_s = eta_s
        self.sets: Dict[Tuple[int, int], np.ndarray] = {}
        self.blocking: Optional[Cube] = None
        self.worst_fraction = 1.0

    @property
    def success(self) -> bool:
        return self.blocking is None

    def to_dict(self) -> Dict[str, Any]:
        """Convert witness to dictionary."""
        return {
            'eta_s': self.eta_s,
            'success': self.success,
            'blocking': list(self.blocking.identifier) if self.blocking is not None else None,
            'worst_fraction': self.worst_fraction,
        }


def sparse_witness(system: CubeSystem, family: Sequence[Cube], eta_s: float) -> SparseWitness:
    """Greedy E(Q) from the finest cubes upward: each cube claims its unclaimed points."""
    if not 0 < eta_s <= 1:
        raise ValueError(f"eta_s must lie in (0, 1], got {eta_s}")
    _check_members(system, family)
    witness = SparseWitness(eta_s)
    claimed = np.zeros(system.space.n, dtype=bool)
    for cube in sorted(_unique(family), key=lambda c: (c.scale, c.index)):
        mine = cube.members[~claimed[cube.members]]
        claimed[mine] = True
        witness.sets[cube.identifier] = mine
        fraction = float(system.space.weights[mine].sum() / cube.measure)
        witness.worst_fraction = min(witness.worst_fraction, fraction)
        if fraction < eta_s * (1 - 1e-12) and witness.blocking is None:
            witness.blocking = cube
    return witness


class SparseFamily:
    """A cube collection with its sparseness and Carleson certificates."""

    def __init__(self, system: CubeSystem, cubes: Sequence[Cube], eta_s: float = 0.5, dilate: float = 1.0):
        self.system = system
        self.cubes = _unique(cubes)
        self.eta_s = eta_s
        self.dilate = dilate
        self.witness: Optional[SparseWitness] = None
        self.carleson: Optional[float] = None
        self.stats: Dict[str, Any] = {}

    def __len__(self) -> int:
        return len(self.cubes)

    def certify(self) -> 'SparseFamily':
        self.witness = sparse_witness(self.system, self.cubes, self.eta_s)
        self.carleson = carleson_constant(self.system, self.cubes)
        # an eta-sparse family is (1/eta)-Carleson; recorded, not enforced
        if self.witness.success:
            self.stats['converse_bound'] = 1.0 / self.eta_s
            self.stats['converse_holds'] = bool(self.carleson <= 1.0 / self.eta_s + 1e-12)
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Cube identifiers plus certificate."""
        return {
            'cubes': [list(cube.identifier) for cube in self.cubes],
            'eta_s': self.eta_s,
            'dilate': self.dilate,
            'carleson': self.carleson,
            'witness': self.witness.to_dict() if self.witness is not None else None,
            'stats': self.stats,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], system: CubeSystem) -> 'SparseFamily':
        cubes = [system.cube(int(k), int(i)) for k, i in data['cubes']]
        family = cls(system, cubes, float(data.get('eta_s', 0.5)), float(data.get('dilate', 1.0)))
        return family.certify()


class DilatedAverages:
    """<|f|>_{CQ} over CQ = B(c_Q, dilate C1 kappa^k(Q)), cached per cube."""

    def __init__(self, system: CubeSystem, f: np.ndarray, dilate: float):
        self.system = system
        self.magnitude = np.abs(system.space.check_value(f))
        self.dilate = dilate
        self.cache: Dict[Tuple[int, int], float] = {}

    def radius(self, cube: Cube) -> float:
        return self.dilate * self.system.C1 * self.system.radius(cube.scale)

    def __call__(self, cube: Cube) -> float:
        key = cube.identifier
        if key not in self.cache:
            space = self.system.space
            ball = space.ball(cube.center, self.radius(cube))
            w = space.weights[ball]
            self.cache[key] = float(np.sum(self.magnitude[ball] * w) / w.sum())
        return self.cache[key]


def sparse_operator(system: CubeSystem, family: Union[SparseFamily, Sequence[Cube]], f: np.ndarray,
                    exponent: float = 1.0, dilate: float = 1.0,
                    averages: Optional[DilatedAverages] = None) -> np.ndarray:
    """(sum over Q in S of 1_Q <|f|>_{CQ}^exponent)^(1/exponent)."""
    if exponent < 1:
        raise ValueError(f"exponent must be at least 1, got {exponent}")
    cubes = family.cubes if isinstance(family, SparseFamily) else _unique(family)
    averages = averages or DilatedAverages(system, f, dilate)
    total = np.zeros(system.space.n)
    for cube in cubes:
        total[cube.members] += averages(cube) ** exponent
    return total ** (1.0 / exponent)


# Pair functionals

class PairFunctional:
    """F(Q', Q) >= 0 on nested pairs, l^r-subadditive with the declared exponent."""

    def __init__(self, system: CubeSystem, evaluator: Optional[Callable[[Cube, Cube], float]] = None,
                 exponent: float = 1.0, name: str = 'custom', certified: bool = True):
        self.system = system
        self.evaluator = evaluator
        self.exponent = exponent
        self.name = name
        self.certified = certified

    def evaluate(self, inner: Cube, outer: Cube) -> float:
        if not self.system.contains(outer, inner):
            raise ValueError("inner cube is not contained in the outer cube")
        return float(self.evaluator(inner, outer))

    def table_below(self, outer: Cube) -> Dict[int, np.ndarray]:
        """F(Q', outer) for every Q' inside outer, as per-scale arrays (zero outside outer)."""
        table = {k: np.zeros(len(self.system.cubes[k])) for k in range(self.system.k_min, outer.scale + 1)}
        for cube in self.system.descendants(outer, strict=False):
            table[cube.scale][cube.index] = self.evaluate(cube, outer)
        return table

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'exponent': self.exponent, 'certified': self.certified}


class ZeroFunctional(PairFunctional):
    """F = 0."""

    def __init__(self, system: CubeSystem):
        super().__init__(system, lambda inner, outer: 0.0, exponent=1.0, name='zero')

    def table_below(self, outer: Cube) -> Dict[int, np.ndarray]:
        return {k: np.zeros(len(self.system.cubes[k])) for k in range(self.system.k_min, outer.scale + 1)}


class WindowFunctional(PairFunctional):
    """F(Q', Q) = max over x' in Q' of the variation (or lambda sqrt(N_lambda)) of a profile over
    t in [kappa^k(Q'), kappa^k(Q)]."""

    def __init__(self, system: CubeSystem, table: ProfileTable, mode: str = 'averages', kind: str = 'variation',
                 r: float = 2.0, lam: float = 1.0):
        if kind not in ('variation', 'jump'):
            raise ValueError(f"kind must be 'variation' or 'jump', got {kind}")
        name = f"{kind}-{'av' if mode == 'averages' else 'tsi'}"
        # jumps are not subadditive; the exponent 2 is nominal
        super().__init__(system, None, exponent=1.0 if kind == 'variation' else 2.0, name=name,
                         certified=kind == 'variation')
        self.table = table
        self.mode = mode
        self.kind = kind
        self.r = r
        self.lam = lam
        self._cache: Dict[Tuple[int, int], Dict[int, np.ndarray]] = {}

    def _point_table(self, points: np.ndarray, top_scale: int) -> np.ndarray:
        """values[i, s] = functional over [kappa^(k_min + s), kappa^top_scale] at points[i]."""
        system = self.system
        low, high = system.radius(system.k_min), system.radius(top_scale)
        rows, stamps = [], []
        for x in points:
            rows.append(self.table.window(int(x), low, high, self.mode))
            breaks = self.table.breaks[int(x)]
            inside = breaks[(breaks > low) & (breaks <= high)]
            stamps.append(np.concatenate([[low], inside]))
        matrix = pad_rows(rows)
        if self.kind == 'variation':
            suffix = suffix_variation_powers_batch(matrix, self.r) ** (1.0 / self.r)
        else:
            suffix = self.lam * np.sqrt(suffix_jump_counts_batch(matrix, self.lam))
        scales = range(system.k_min, top_scale + 1)
        out = np.zeros((len(points), len(scales)))
        for i, stamp in enumerate(stamps):
            starts = np.searchsorted(stamp, [system.radius(k) for k in scales], side='right') - 1
            out[i] = suffix[i, np.maximum(starts, 0)]
        return out

    def table_below(self, outer: Cube) -> Dict[int, np.ndarray]:
        key = outer.identifier
        if key not in self._cache:
            system = self.system
            points = outer.members
            values = self._point_table(points, outer.scale)
            table = {}
            for s, k in enumerate(range(system.k_min, outer.scale + 1)):
                per_cube = np.zeros(len(system.cubes[k]))
                np.maximum.at(per_cube, system.labels[k][points], values[:, s])
                table[k] = per_cube
            self._cache[key] = table
        return self._cache[key]

    def evaluate(self, inner: Cube, outer: Cube) -> float:
        if not self.system.contains(outer, inner):
            raise ValueError("inner cube is not contained in the outer cube")
        return float(self.table_below(outer)[inner.scale][inner.index])


def check_pair_functional(functional: PairFunctional, outer: Cube, samples: int = 50, seed: int = 0) -> Dict[str, Any]:
    """Spot-check monotonicity and l^r-subadditivity on random chains Q'' in Q' in Q."""
    system = functional.system
    rng = np.random.default_rng(seed)
    r = functional.exponent
    monotone_violations = 0
    subadditive_violations = 0
    worst = 0.0
    for _ in range(samples):
        point = int(rng.choice(outer.members))
        scales = np.sort(rng.integers(system.k_min, outer.scale + 1, size=2))
        middle = system.cube_of(point, int(scales[1]))
        inner = system.cube_of(point, int(scales[0]))
        whole = functional.evaluate(inner, outer)
        left = functional.evaluate(inner, middle)
        right = functional.evaluate(middle, outer)
        if left > whole * (1 + 1e-12) + 1e-12:
            monotone_violations += 1
        bound = (left ** r + right ** r) ** (1.0 / r)
        if whole > bound * (1 + 1e-9) + 1e-12:
            subadditive_violations += 1
        if bound > 0:
            worst = max(worst, whole / bound)
    return {
        'monotone_violations': monotone_violations,
        'subadditive_violations': subadditive_violations,
        'worst_ratio': worst,
        'samples': samples,
    }


def nontangential_N(system: CubeSystem, functional: PairFunctional, scope: Optional[Cube] = None) -> np.ndarray:
    """N_Q F(x) = sup over x in Q' in Q of F(Q', Q); the global version takes every Q. Empty sup is 0."""
    field = np.zeros(system.space.n)
    outers = [scope] if scope is not None else system.all_cubes()
    for outer in outers:
        table = functional.table_below(outer)
        points = outer.members
        for k, values in table.items():
            np.maximum.at(field, points, values[system.labels[k][points]])
    return field


# Stopping-time construction

class ThresholdPolicy:
    """Starting thresholds (A, B) and their growth until the children carry at most half the mass."""

    def __init__(self, a: float = 4.0, b: float = 4.0, growth: float = 2.0, max_rounds: int = 64):
        self.a = a
        self.b = b
        self.growth = growth
        self.max_rounds = max_rounds

    @classmethod
    def from_weak_constant(cls, weak_constant: float, **kwargs) -> 'ThresholdPolicy':
        return cls(a=4.0, b=4.0 * max(weak_constant, 1e-12), **kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return {'a': self.a, 'b': self.b, 'growth': self.growth, 'max_rounds': self.max_rounds}


def _select_children(system: CubeSystem, outer: Cube, averages: DilatedAverages, table: Dict[int, np.ndarray],
                     a: float, b: float, level: float) -> List[Cube]:
    covered = np.zeros(system.space.n, dtype=bool)
    chosen = []
    for k in range(outer.scale - 1, system.k_min - 1, -1):
        for index in np.unique(system.labels[k][outer.members]):
            cube = system.cubes[k][int(index)]
            if len(cube) >= len(outer) or covered[cube.members[0]]:
                continue
            if averages(cube) > a * level or table[k][cube.index] > b * level:
                covered[cube.members] = True
                chosen.append(cube)
    return chosen


def build_sparse_family(system: CubeSystem, functional: PairFunctional, f: np.ndarray, k0: Optional[int] = None,
                        policy: Optional[ThresholdPolicy] = None, dilate: float = 1.0) -> SparseFamily:
    """Stopping cubes from the scale-k0 cubes down, with children carrying at most half their parent's mass."""
    k0 = system.k_max if k0 is None else k0
    system.check_scale(k0)
    policy = policy or ThresholdPolicy()
    averages = DilatedAverages(system, f, dilate)
    queue = list(system.cubes[k0])
    family: List[Cube] = []
    rounds_used = 0
    while queue:
        cube = queue.pop(0)
        family.append(cube)
        level = averages(cube)
        if level == 0 or cube.scale == system.k_min:
            continue
        table = functional.table_below(cube)
        a, b = policy.a, policy.b
        for attempt in range(policy.max_rounds):
            children = _select_children(system, cube, averages, table, a, b, level)
            if sum(child.measure for child in children) <= cube.measure / 2:
                break
            a *= policy.growth
            b *= policy.growth
        else:
            raise ConstructionError(f"threshold growth did not converge below cube {cube.identifier}")
        rounds_used = max(rounds_used, attempt)
        queue.extend(children)

    result = SparseFamily(system, family, eta_s=0.5, dilate=dilate).certify()
    result.stats.update({'k0': k0, 'cubes': len(result), 'max_threshold_doublings': rounds_used,
                          'policy': policy.to_dict(), 'functional': functional.to_dict()})
    logger.info(f"Sparse family: {len(result)} cubes, Carleson {result.carleson:.4g}")
    return result


class DominationReport:
    """Pointwise ratio lhs / A_S f with 0/0 = 0."""

    QUANTILES = (0.5, 0.9, 0.99, 1.0)

    def __init__(self, ratio: np.ndarray, violations: np.ndarray):
        self.ratio = ratio
        self.violations = violations

    @property
    def constant(self) -> float:
        return float(self.ratio.max()) if self.ratio.size else 0.0

    @property
    def passed(self) -> bool:
        return self.violations.size == 0 and bool(np.isfinite(self.constant))

    def quantiles(self) -> Dict[str, float]:
        return {str(q): float(np.quantile(self.ratio, q)) for q in self.QUANTILES} if self.ratio.size else {}

    def to_dict(self) -> Dict[str, Any]:
        """Summary without the ratio field."""
        return {
            'constant': self.constant,
            'quantiles': self.quantiles(),
            'violations': self.violations.tolist()[:20],
            'violation_count': int(self.violations.size),
            'passed': self.passed,
        }


def verify_domination(lhs: np.ndarray, family: SparseFamily, f: np.ndarray, exponent: float = 1.0,
                      dilate: Optional[float] = None, sparse: Optional[np.ndarray] = None) -> DominationReport:
    """Measured constant of lhs <= C A_S f pointwise."""
    dilate = family.dilate if dilate is None else dilate
    if sparse is None:
        sparse = sparse_operator(family.system, family, f, exponent, dilate)
    lhs = np.asarray(lhs, dtype=float)
    positive = sparse > 0
    ratio = np.zeros(lhs.shape)
    np.divide(lhs, sparse, out=ratio, where=positive)
    violations = np.flatnonzero(~positive & (lhs > 0))
    return DominationReport(ratio, violations)
