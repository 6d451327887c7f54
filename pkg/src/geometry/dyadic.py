"""
Dyadic - Cube systems on discretized spaces: shifted grids, Christ cubes and their checks
"""

import itertools
import logging
from typing import Dict, Any, List, Optional, Sequence, Tuple, Union

import numpy as np

from core import settings
from core.errors import AdjacencyError, ConstructionError, DocumentError, ScaleError
from core.parallel import chunk_ranges, ordered_map
from analysis.fitting import fit_power_law
from geometry.space import Space

logger = logging.getLogger(__name__)

_SANDWICH_SLACK = 1e-9


class Cube:
    """A dyadic cube: a member set remembered together with its scale."""

    def __init__(self, scale: int, index: int, members: np.ndarray, center: int, measure: float,
                 parent: Optional[int] = None):
        self.scale = scale
        self.index = index
        self.members = members
        self.center = center
        self.measure = measure
        self.parent = parent
        self.children: List[int] = []
        self.diameter: Optional[float] = None
        self.diameter_method = ''

    @property
    def identifier(self) -> Tuple[int, int]:
        return (self.scale, self.index)

    def __len__(self) -> int:
        return len(self.members)

    def __repr__(self) -> str:
        return f"Cube(scale={self.scale}, index={self.index}, size={len(self.members)})"

    def to_dict(self) -> Dict[str, Any]:
        """Cube metadata without the member list."""
        return {
            'scale': self.scale,
            'index': self.index,
            'center': int(self.center),
            'measure': float(self.measure),
            'diameter': self.diameter,
            'diameter_method': self.diameter_method,
            'parent': self.parent,
        }


class BallQuery:
    """Closed ball B(center, radius) around a point id."""

    def __init__(self, center: int, radius: float):
        if radius <= 0:
            raise ScaleError(f"ball radius must be positive, got {radius}")
        self.center = int(center)
        self.radius = float(radius)


class CubeSystem:
    """Scale-indexed nested partitions with centers, parents and measured constants."""

    def __init__(self, space: Space, kappa: float, labels: Dict[int, np.ndarray], centers: Dict[int, np.ndarray],
                 construction: str = 'custom', alpha: Optional[Tuple[int, ...]] = None, seed: Optional[int] = None,
                 a0: Optional[float] = None, C1: Optional[float] = None):
        if kappa <= 1:
            raise ConstructionError(f"kappa must exceed 1, got {kappa}")
        if not labels:
            raise ConstructionError("a cube system needs at least one scale")
        self.space = space
        self.kappa = float(kappa)
        self.scales = sorted(int(k) for k in labels)
        if self.scales != list(range(self.scales[0], self.scales[-1] + 1)):
            raise ConstructionError(f"scales must be consecutive, got {self.scales}")
        self.k_min = self.scales[0]
        self.k_max = self.scales[-1]
        self.construction = construction
        self.alpha = alpha
        self.seed = seed
        self.labels: Dict[int, np.ndarray] = {}
        self.measures: Dict[int, np.ndarray] = {}
        self.cubes: Dict[int, List[Cube]] = {}
        self.boundary: Optional[Dict[str, Any]] = None

        for k in self.scales:
            lab = np.asarray(labels[k], dtype=np.int64)
            if lab.shape != (space.n,):
                raise ConstructionError(f"labels at scale {k} do not cover the {space.n} points")
            cen = np.asarray(centers[k], dtype=np.int64)
            count = int(lab.max()) + 1
            if cen.shape != (count,):
                raise ConstructionError(f"scale {k} has {count} cubes but {cen.shape[0]} centers")
            lab.setflags(write=False)
            self.labels[k] = lab
            self.measures[k] = np.bincount(lab, weights=space.weights, minlength=count)
            order = np.argsort(lab, kind='stable')
            splits = np.split(order, np.cumsum(np.bincount(lab, minlength=count))[:-1])
            self.cubes[k] = [Cube(k, i, splits[i], int(cen[i]), float(self.measures[k][i])) for i in range(count)]

        for k in self.scales[:-1]:
            upper = self.labels[k + 1]
            for cube in self.cubes[k]:
                cube.parent = int(upper[cube.members[0]])
                self.cubes[k + 1][cube.parent].children.append(cube.index)

        if a0 is None or C1 is None:
            a0, C1 = measure_sandwich(self)
        self.a0 = float(a0)
        self.C1 = float(C1)

    # Navigation

    def radius(self, k: int) -> float:
        """kappa^k."""
        return self.kappa ** k

    def check_scale(self, k: int) -> None:
        if k < self.k_min or k > self.k_max:
            raise ScaleError(f"scale {k} outside [{self.k_min}, {self.k_max}]")

    def cubes_at(self, k: int) -> List[Cube]:
        self.check_scale(k)
        return self.cubes[k]

    def cube(self, k: int, index: int) -> Cube:
        return self.cubes_at(k)[index]

    def cube_of(self, point: int, k: int) -> Cube:
        """The scale-k cube containing a point."""
        self.check_scale(k)
        return self.cubes[k][int(self.labels[k][point])]

    def parent_of(self, cube: Cube) -> Optional[Cube]:
        if cube.parent is None or cube.scale >= self.k_max:
            return None
        return self.cubes[cube.scale + 1][cube.parent]

    def ancestors(self, cube: Cube) -> List[Cube]:
        """Strictly coarser cubes containing this one, finest first."""
        first = cube.members[0]
        return [self.cubes[k][int(self.labels[k][first])] for k in range(cube.scale + 1, self.k_max + 1)]

    def descendants(self, cube: Cube, strict: bool = True) -> List[Cube]:
        """Cubes at finer scales inside this one, coarsest first."""
        found = [] if strict else [cube]
        for k in range(cube.scale - 1, self.k_min - 1, -1):
            for index in np.unique(self.labels[k][cube.members]):
                found.append(self.cubes[k][int(index)])
        return found

    def top_cubes(self) -> List[Cube]:
        return self.cubes[self.k_max]

    def contains(self, outer: Cube, inner: Cube) -> bool:
        """Q' subset of Q as nested dyadic cubes."""
        if inner.scale > outer.scale:
            return False
        return int(self.labels[outer.scale][inner.members[0]]) == outer.index

    def all_cubes(self) -> List[Cube]:
        """Every cube, coarsest scale first."""
        return [cube for k in reversed(self.scales) for cube in self.cubes[k]]

    def diameter(self, cube: Cube) -> float:
        """Exact pairwise diameter for small cubes, double sweep from the center otherwise."""
        if cube.diameter is None:
            members = cube.members
            if len(members) == 1:
                cube.diameter, cube.diameter_method = 0.0, 'exact'
            elif len(members) <= settings.EXACT_DIAMETER_LIMIT:
                best = 0.0
                for chunk in chunk_ranges(len(members), 256):
                    best = max(best, float(self.space.distances_between(members[chunk.start:chunk.stop], members).max()))
                cube.diameter, cube.diameter_method = best, 'exact'
            else:
                from_center = self.space.distances_between([cube.center], members)[0]
                far = members[int(np.argmax(from_center))]
                cube.diameter = float(self.space.distances_between([far], members).max())
                cube.diameter_method = 'double-sweep'
        return cube.diameter

    # Serialization

    def to_dict(self, with_diameters: bool = False) -> Dict[str, Any]:
        """Per-scale flat label arrays plus cube metadata."""
        if with_diameters:
            for cube in self.all_cubes():
                self.diameter(cube)
        return {
            'schema': settings.SYSTEM_SCHEMA,
            'space': self.space.to_dict(),
            'kappa': self.kappa,
            'scales': [self.k_min, self.k_max],
            'construction': self.construction,
            'alpha': list(self.alpha) if self.alpha is not None else None,
            'seed': self.seed,
            'a0': self.a0,
            'C1': self.C1,
            'boundary': self.boundary,
            'labels': {str(k): self.labels[k].tolist() for k in self.scales},
            'cubes': {str(k): [cube.to_dict() for cube in self.cubes[k]] for k in self.scales},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], space: Optional[Space] = None) -> 'CubeSystem':
        """Rebuild a system from its document."""
        if data.get('schema') != settings.SYSTEM_SCHEMA:
            raise DocumentError(f"expected schema {settings.SYSTEM_SCHEMA}, got {data.get('schema')}")
        try:
            space = space or Space.from_dict(data['space'])
            labels = {int(k): np.asarray(v) for k, v in data['labels'].items()}
            centers = {int(k): np.asarray([c['center'] for c in v]) for k, v in data['cubes'].items()}
            alpha = tuple(data['alpha']) if data.get('alpha') is not None else None
            system = cls(space, float(data['kappa']), labels, centers, construction=data.get('construction', 'custom'),
                         alpha=alpha, seed=data.get('seed'), a0=data.get('a0'), C1=data.get('C1'))
        except (KeyError, TypeError) as e:
            raise DocumentError(f"malformed cube system document: {e}")
        system.boundary = data.get('boundary')
        return system


def measure_sandwich(system: CubeSystem) -> Tuple[float, float]:
    """Largest a0 and smallest C1 with B(c_Q, a0 kappa^k) in Q in B(c_Q, C1 kappa^k) for every cube."""
    space = system.space
    a0_candidates = []
    c1_candidates = []
    for k in system.scales:
        lab = system.labels[k]
        centers = np.array([cube.center for cube in system.cubes[k]])
        scale = system.radius(k)

        def measure(chunk: range) -> Tuple[np.ndarray, np.ndarray]:
            block = space.distances_between(centers[chunk.start:chunk.stop])
            inside = lab[None, :] == np.arange(chunk.start, chunk.stop)[:, None]
            outside = np.where(inside, np.inf, block).min(axis=1)
            reach = np.where(inside, block, 0.0).max(axis=1)
            return outside, reach

        for outside, reach in ordered_map(measure, chunk_ranges(len(centers), 128)):
            finite = outside[np.isfinite(outside)]
            if finite.size:
                a0_candidates.append(float(finite.min()) / scale)
            c1_candidates.append(float(reach.max()) / scale)

    C1 = max(c1_candidates) * (1 + _SANDWICH_SLACK) if c1_candidates else 0.0
    if C1 == 0.0:
        C1 = 1.0
    a0 = min(a0_candidates) * (1 - _SANDWICH_SLACK) if a0_candidates else C1
    return a0, max(C1, a0)


# Shifted dyadic grids

def shifted_cube_index(x: np.ndarray, alpha: int, scale: int) -> np.ndarray:
    """Index m of the shifted cube of side 2^scale containing x: floor(2^k x - (-1)^k alpha/3), k = -scale."""
    k = -scale
    sign = 1 if k % 2 == 0 else -1
    return np.floor(np.asarray(x, dtype=float) * 2.0 ** k - sign * alpha / 3.0).astype(np.int64)


def shifted_cube_bounds(m: int, alpha: int, scale: int) -> Tuple[float, float]:
    """Half-open interval [lo, hi) of shifted cube m at side 2^scale."""
    k = -scale
    sign = 1 if k % 2 == 0 else -1
    shift = sign * alpha / 3.0
    return (m + shift) * 2.0 ** scale, (m + 1 + shift) * 2.0 ** scale


def _coarser_index(m: np.ndarray, alpha: int, scale: int) -> np.ndarray:
    # exact integer recursion: m_{s+1} = floor((m_s + (-1)^k alpha) / 2), k = -s
    k = -scale
    sign = 1 if k % 2 == 0 else -1
    return np.floor_divide(m + sign * alpha, 2)


def build_shifted_grids(space: Space, scales: Sequence[int]) -> List[CubeSystem]:
    """The 3^dimension shifted dyadic systems of a Euclidean grid, one per alpha in {0,1,2}^dimension."""
    if space.kind != 'euclidean':
        raise ConstructionError(f"shifted grids need a Euclidean grid, got {space.kind}")
    scales = sorted(int(s) for s in scales)
    if not scales:
        raise ConstructionError("scale range is empty")
    dimension = space.coords.shape[1]
    systems = []
    for alpha in itertools.product(range(3), repeat=dimension):
        per_axis = []
        for axis in range(dimension):
            m = shifted_cube_index(space.coords[:, axis], alpha[axis], scales[0])
            indices = {scales[0]: m}
            for s in scales[:-1]:
                m = _coarser_index(m, alpha[axis], s)
                indices[s + 1] = m
            per_axis.append(indices)

        labels = {}
        centers = {}
        for s in scales:
            keys = np.stack([per_axis[axis][s] for axis in range(dimension)], axis=1)
            unique_keys, lab = np.unique(keys, axis=0, return_inverse=True)
            lab = lab.ravel()
            k = -s
            sign = 1 if k % 2 == 0 else -1
            geometric = (unique_keys + 0.5 + sign * np.asarray(alpha) / 3.0) * 2.0 ** s
            offset = space.coords - geometric[lab]
            dist = np.sqrt(np.sum(offset * offset, axis=1))
            order = np.lexsort((np.arange(space.n), dist, lab))
            first = np.ones(order.size, dtype=bool)
            first[1:] = lab[order][1:] != lab[order][:-1]
            labels[s] = lab
            centers[s] = order[first]
        systems.append(CubeSystem(space, 2.0, labels, centers, construction='shifted', alpha=tuple(alpha)))
        logger.debug(f"Built shifted system alpha={alpha} over scales {scales[0]}..{scales[-1]}")
    return systems


# Christ cubes

def _greedy_net(space: Space, members: np.ndarray, first: int, separation: float) -> np.ndarray:
    """Maximal separated subset of members (taken in the given order) that starts from first, sorted by id."""
    nearest = space.distances_between([first], members)[0]
    net = [first]
    for position, p in enumerate(members):
        if nearest[position] >= separation:
            net.append(int(p))
            np.minimum(nearest, space.distances_between([int(p)], members)[0], out=nearest)
    return np.sort(np.asarray(net, dtype=np.int64))


def _reserved_center(space: Space, cell: np.ndarray, center: int, inner: float) -> Optional[int]:
    """A member whose closed inner ball holds members only: the net center if it works, else the deepest member."""
    inside = np.zeros(space.n, dtype=bool)
    inside[cell] = True
    d = space.distances_from(center)
    if np.all(inside[d <= inner]):
        return center
    # farther points cannot come within inner of a member
    reach = float(d[cell].max())
    near = np.flatnonzero(~inside & (d <= space.A0 * (reach + inner)))
    depth = space.distances_between(cell, near).min(axis=1)
    best = int(np.argmax(depth))
    return int(cell[best]) if depth[best] > inner else None


def _split_parent(space: Space, members: np.ndarray, center: int, separation: float,
                  inner: float) -> List[Tuple[int, np.ndarray]]:
    """(center, sorted member ids) of the children of one cube whose members come in seeded order."""
    net = _greedy_net(space, members, center, separation)

    def assign(chunk: range) -> np.ndarray:
        block = space.distances_between(members[chunk.start:chunk.stop], net)
        return np.argmin(block, axis=1)

    local = np.concatenate(ordered_map(assign, chunk_ranges(members.size, 256)))
    order = np.argsort(local, kind='stable')
    bounds = np.cumsum(np.bincount(local, minlength=net.size))[:-1]
    cells = [np.sort(members[part]) for part in np.split(order, bounds)]

    kept: List[Tuple[int, np.ndarray]] = []
    failing: List[np.ndarray] = []
    for c, cell in zip(net, cells):
        reserved = _reserved_center(space, cell, int(c), inner)
        if reserved is None:
            failing.append(cell)
        else:
            kept.append((reserved, cell))
    if not kept:
        raise ConstructionError(f"no child of the cube centered at {center} keeps its inner ball")
    if not failing:
        return kept

    # thin children join the nearest child that keeps its ball
    kept_points = np.concatenate([cell for _, cell in kept])
    owner = np.repeat(np.arange(len(kept)), [cell.size for _, cell in kept])
    extra: List[List[np.ndarray]] = [[] for _ in kept]
    for cell in failing:
        gaps = space.distances_between(cell, kept_points).min(axis=0)
        extra[int(owner[int(np.argmin(gaps))])].append(cell)
    return [(c, np.sort(np.concatenate([cell] + extra[i])) if extra[i] else cell)
            for i, (c, cell) in enumerate(kept)]


def build_christ_cubes(space: Space, kappa: float, scales: Sequence[int], seed: int = 0) -> CubeSystem:
    """Cubes split coarse to fine: a greedy kappa^k net inside each parent, nearest-center assignment among
    siblings, and every cube holding the closed ball B(c_Q, a0 kappa^k) with a0 = 1/(4 A0)."""
    scales = sorted(int(k) for k in scales)
    if not scales:
        raise ConstructionError("scale range is empty")
    if kappa <= 1:
        raise ConstructionError(f"kappa must exceed 1, got {kappa}")
    if space.n > 1:
        if kappa ** scales[-1] > space.diameter():
            logger.warning(f"kappa^{scales[-1]} exceeds the diameter {space.diameter():.4g}")
        if kappa ** scales[0] < space.min_spacing():
            logger.warning(f"kappa^{scales[0]} is below the minimum spacing {space.min_spacing():.4g}")

    a0 = 1.0 / (4.0 * space.A0)
    rng = np.random.default_rng(seed)
    rank = np.empty(space.n, dtype=np.int64)
    rank[rng.permutation(space.n)] = np.arange(space.n)
    seeded = np.argsort(rank, kind='stable')
    # the whole space acts as the parent of the top scale
    parents = [(int(seeded[0]), seeded)]
    labels: Dict[int, np.ndarray] = {}
    centers: Dict[int, np.ndarray] = {}
    for k in reversed(scales):
        children: List[Tuple[int, np.ndarray]] = []
        for center, members in parents:
            children.extend(_split_parent(space, members, center, kappa ** k, a0 * kappa ** k))
        children.sort(key=lambda child: child[0])
        lab = np.empty(space.n, dtype=np.int64)
        for index, (_, cell) in enumerate(children):
            lab[cell] = index
        labels[k] = lab
        centers[k] = np.array([c for c, _ in children], dtype=np.int64)
        parents = [(c, cell[np.argsort(rank[cell], kind='stable')]) for c, cell in children]
        logger.debug(f"Christ cubes at scale {k}: {len(children)} cubes")

    if centers[scales[0]].size == 1 and space.n > 1:
        raise ConstructionError(f"net at scale {scales[0]} degenerates to a single point")

    system = CubeSystem(space, kappa, labels, centers, construction='christ', seed=seed)
    measured = system.a0
    if measured < a0 * (1 - 1e-6):
        raise ConstructionError(f"inner balls measured a0={measured:.4g} below the reserved {a0:.4g}")
    system.a0 = a0
    logger.info(f"Christ cubes: {space.n} points, scales {scales[0]}..{scales[-1]}, a0={a0:.4g} "
                f"(measured {measured:.4g}), C1={system.C1:.4g}")
    return system


# Verification

class AxiomReport:
    """Pass/fail per dyadic axiom with a witness for the first failure."""

    AXIOMS = ('coverage', 'disjointness', 'nesting', 'sandwich')

    def __init__(self):
        self.results: Dict[str, Dict[str, Any]] = {name: {'passed': True, 'witness': None} for name in self.AXIOMS}
        self.constants: Dict[str, Any] = {}

    def fail(self, axiom: str, witness: Dict[str, Any]) -> None:
        if self.results[axiom]['passed']:
            self.results[axiom] = {'passed': False, 'witness': witness}

    @property
    def passed(self) -> bool:
        return all(result['passed'] for result in self.results.values())

    def to_dict(self) -> Dict[str, Any]:
        """Convert report to dictionary."""
        return {'passed': self.passed, 'axioms': self.results, 'constants': self.constants}


def verify_cube_axioms(system: CubeSystem, a0_min: Optional[float] = None) -> AxiomReport:
    """Check coverage, disjointness, unique nesting and the ball sandwich from the cube member lists.

    The sandwich uses the system's recorded a0 and C1; a0_min, when given, sets the inner radius instead.
    """
    report = AxiomReport()
    space = system.space
    a0 = system.a0 if a0_min is None else float(a0_min)
    bound = 1.0 / (4.0 * space.A0)
    report.constants = {'a0': a0, 'C1': system.C1, 'a0_bound': bound,
                        'a0_meets_bound': bool(a0 >= bound * (1 - 1e-12))}
    for k in system.scales:
        cubes = system.cubes[k]
        owners = np.concatenate([cube.members for cube in cubes]) if cubes else np.array([], dtype=int)
        counts = np.bincount(owners, minlength=space.n)
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            report.fail('coverage', {'scale': k, 'point': int(missing[0])})
        doubled = np.flatnonzero(counts > 1)
        if doubled.size:
            p = int(doubled[0])
            holders = [cube.index for cube in cubes if np.any(cube.members == p)]
            report.fail('disjointness', {'scale': k, 'point': p, 'cubes': holders[:2]})

    for k in system.scales[:-1]:
        coarse = system.cubes[k + 1]
        owner = np.full(space.n, -1, dtype=np.int64)
        for cube in coarse:
            owner[cube.members] = cube.index
        for cube in system.cubes[k]:
            parents = np.unique(owner[cube.members])
            if parents.size != 1 or parents[0] < 0:
                report.fail('nesting', {'scale': k, 'cube': cube.index, 'parents': parents.tolist()})
                break

    for k in system.scales:
        inner = a0 * system.radius(k)
        outer = system.C1 * system.radius(k)
        for cube in system.cubes[k]:
            d = space.distances_from(cube.center)
            member_mask = np.zeros(space.n, dtype=bool)
            member_mask[cube.members] = True
            stray = np.flatnonzero((d <= inner) & ~member_mask)
            if stray.size:
                report.fail('sandwich', {'scale': k, 'cube': cube.index, 'point': int(stray[0]), 'side': 'inner'})
                break
            if not member_mask[cube.center] or d[cube.members].max() > outer:
                far = int(cube.members[int(np.argmax(d[cube.members]))])
                report.fail('sandwich', {'scale': k, 'cube': cube.index, 'point': far, 'side': 'outer'})
                break
    return report


class AdjacencyReport:
    """Smallest covering cube per ball across several systems."""

    def __init__(self):
        self.ratios: List[float] = []
        self.systems: List[int] = []
        self.scales: List[int] = []

    @property
    def C3(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    def to_dict(self) -> Dict[str, Any]:
        """Convert report to dictionary."""
        return {
            'C3': self.C3,
            'mean_ratio': float(np.mean(self.ratios)) if self.ratios else 0.0,
            'queries': len(self.ratios),
            'system_usage': np.bincount(self.systems).tolist() if self.systems else [],
        }


def check_adjacency(systems: Sequence[CubeSystem], queries: Sequence[BallQuery]) -> AdjacencyReport:
    """For each ball, the smallest cube over all systems containing it; C3 = worst diam(Q)/r."""
    if not systems:
        raise ConstructionError("no systems given")
    first = systems[0]
    for system in systems[1:]:
        if system.kappa != first.kappa or system.scales != first.scales or system.space is not first.space:
            raise ConstructionError("adjacent systems must share kappa, scale range and space")

    report = AdjacencyReport()
    for query in queries:
        ball = first.space.ball(query.center, query.radius)
        best: Optional[Tuple[float, int, int]] = None
        for s, system in enumerate(systems):
            for k in system.scales:
                lab = system.labels[k][ball]
                if np.all(lab == lab[0]):
                    cube = system.cubes[k][int(lab[0])]
                    candidate = (system.diameter(cube), s, k)
                    if best is None or candidate[0] < best[0]:
                        best = candidate
                    break
        if best is None:
            raise AdjacencyError(f"ball B({query.center}, {query.radius}) is not contained in any top-scale cube")
        report.ratios.append(best[0] / query.radius)
        report.systems.append(best[1])
        report.scales.append(best[2])
    return report


class BoundaryReport:
    """Collar measures and the fitted small-boundary certificate."""

    def __init__(self, taus: Sequence[float]):
        self.taus = list(taus)
        self.inner: List[float] = []
        self.outer: List[float] = []
        self.total: List[float] = []
        self.regions = 0
        self.skipped = 0
        self.eta = float('nan')
        self.C3 = float('nan')
        self.fit_residual = float('nan')

    def to_dict(self) -> Dict[str, Any]:
        """Convert report to dictionary."""
        return {
            'taus': self.taus,
            'inner_ratio': self.inner,
            'outer_ratio': self.outer,
            'total_ratio': self.total,
            'regions': self.regions,
            'skipped': self.skipped,
            'eta': self.eta,
            'C3': self.C3,
            'fit_residual': self.fit_residual,
        }


def collar_measures(space: Space, members: np.ndarray, width: float) -> Tuple[float, float]:
    """Measures of the inner and outer collars of width `width` around a point set."""
    mask = np.zeros(space.n, dtype=bool)
    mask[members] = True
    outside = np.flatnonzero(~mask)
    if outside.size == 0:
        return 0.0, 0.0
    inner = 0.0
    near_outside = np.zeros(outside.size, dtype=bool)
    for chunk in chunk_ranges(len(members), 256):
        block = space.distances_between(members[chunk.start:chunk.stop], outside)
        close = block <= width
        inner += float(space.weights[members[chunk.start:chunk.stop]][close.any(axis=1)].sum())
        near_outside |= close.any(axis=0)
    return inner, float(space.weights[outside][near_outside].sum())


def measure_small_boundary(target: Union[CubeSystem, Sequence[BallQuery]], tau_list: Sequence[float],
                           space: Optional[Space] = None, scales: Optional[Sequence[int]] = None,
                           max_regions: int = 32) -> BoundaryReport:
    """mu(collar_{tau diam Q} Q) / mu(Q) per tau, with the fitted exponent eta and constant C3."""
    taus = sorted(float(t) for t in tau_list)
    if not taus:
        raise ScaleError("tau list is empty")
    if any(t <= 0 or t > 1 for t in taus):
        raise ScaleError("tau values must lie in (0, 1]")

    regions: List[Tuple[np.ndarray, float]] = []
    if isinstance(target, CubeSystem):
        space = target.space
        for k in (scales if scales is not None else target.scales):
            candidates = [cube for cube in target.cubes_at(k) if 1 < len(cube) < space.n]
            if len(candidates) > max_regions:
                picks = np.unique(np.linspace(0, len(candidates) - 1, max_regions).astype(int))
                candidates = [candidates[i] for i in picks]
            regions.extend((cube.members, target.diameter(cube)) for cube in candidates)
    else:
        if space is None:
            raise ScaleError("ball targets need a space")
        for query in target:
            members = space.ball(query.center, query.radius)
            d = space.distances_between(members[:1], members)[0]
            regions.append((members, float(space.distances_between(members[[int(np.argmax(d))]], members).max())))

    report = BoundaryReport(taus)
    floor = 2.0 * space.min_spacing()
    used = set()
    for tau in taus:
        inner_worst = outer_worst = total_worst = 0.0
        for r, (members, diameter) in enumerate(regions):
            width = tau * diameter
            if width < floor:
                report.skipped += 1
                continue
            used.add(r)
            inner, outer = collar_measures(space, members, width)
            mu = float(space.weights[members].sum())
            inner_worst = max(inner_worst, inner / mu)
            outer_worst = max(outer_worst, outer / mu)
            total_worst = max(total_worst, (inner + outer) / mu)
        report.inner.append(inner_worst)
        report.outer.append(outer_worst)
        report.total.append(total_worst)
    report.regions = len(used)

    fit = fit_power_law(taus, report.total)
    report.eta = fit.exponent
    report.fit_residual = fit.residual
    if np.isfinite(fit.exponent):
        report.C3 = float(max((t / tau ** fit.exponent for tau, t in zip(taus, report.total) if t > 0),
                              default=float('nan')))
    if isinstance(target, CubeSystem):
        target.boundary = {'eta': report.eta, 'C3': report.C3, 'taus': taus}
        if not (report.eta > 0):
            logger.warning(f"Cube system fails the small boundary property on the sampled taus (eta={report.eta})")
    return report
