"""
Experiment Runner - Drives domination, weighted and weak (1,1) verification runs into report files
"""

import logging
import math
from typing import Dict, List, Any, Optional, Tuple

import numpy as np

from core import settings
from core.errors import BudgetError, ConfigError
from core.experiment_config import ExperimentConfig
from analysis.kernels import Kernel
from analysis.martingale import martingale_majorant_field, maximal_weak_ratio
from analysis.operators import ProfileTable, jump_field, short_variation_square, variation_field
from analysis.sparse import (PairFunctional, ThresholdPolicy, WindowFunctional, build_sparse_family,
                             verify_domination)
from analysis.weights import (Weight, characteristics, get_weight, strong_weighted_ratio, weak_lp_quasinorm,
                              weak_weighted_ratio, weighted_norm)
from exporters.report_exporter import ReportExporter
from geometry.dyadic import CubeSystem, build_christ_cubes, build_shifted_grids
from geometry.space import Space, build_euclidean_grid, build_heisenberg_grid
from parsers.spec_parser import parse_function, parse_kernel, parse_ladder

logger = logging.getLogger(__name__)

CARLESON_LIMIT = 2.0 + 1e-12


def spread(values: List[float]) -> float:
    """max / min of nonnegative constants; 1 when all vanish, inf when only some do."""
    values = [float(v) for v in values]
    if not values or not all(math.isfinite(v) for v in values):
        return math.inf
    if max(values) == 0:
        return 1.0
    if min(values) == 0:
        return math.inf
    return max(values) / min(values)


def r_band(entries: List[Dict[str, Any]], r_ref: float) -> float:
    """Largest constant (r - 2)/r over a sweep relative to its value at r_ref.

    A constant that is nonincreasing in r and grows no faster than r/(r - 2) as r falls keeps this at most
    (r_max - 2) r_ref / (r_max (r_ref - 2)).
    """
    by_r = {float(entry['r']): float(entry['normalized']) for entry in entries}
    if r_ref not in by_r or not all(math.isfinite(v) for v in by_r.values()):
        return math.inf
    if max(by_r.values()) == 0:
        return 1.0
    if by_r[r_ref] == 0:
        return math.inf
    return max(by_r.values()) / by_r[r_ref]


class ExperimentRunner:
    """Runs configured experiments and writes their reports."""

    def __init__(self, config: ExperimentConfig, output_dir: Optional[str] = None):
        self.config = config
        self.output_dir = output_dir or config.get('output_dir', 'out')
        self.exporter = ReportExporter(self.output_dir)
        settings.set_threads(int(config.get('threads', 1)))

    # Building blocks

    def build_space(self, size: int, centered: Optional[bool] = None, extent: float = 1.0) -> Space:
        """A grid of the configured kind with the given side count."""
        space_cfg = self.config.get('space')
        centered = bool(space_cfg.get('centered')) if centered is None else centered
        spacing = space_cfg.get('spacing')
        if space_cfg['kind'] == 'heisenberg':
            return build_heisenberg_grid(size, float(spacing or 1.0 / size))
        if spacing is None:
            spacing = extent / (size - 1) if centered else extent / size
        return build_euclidean_grid(int(space_cfg.get('dimension', 1)), size, float(spacing), centered=centered)

    def scale_range(self, space: Space, kappa: float) -> List[int]:
        configured = self.config.get('cubes.scales')
        if configured:
            low, high = configured
            return list(range(int(low), int(high) + 1))
        low = math.floor(math.log(space.min_spacing(), kappa) + 1e-9)
        high = math.ceil(math.log(space.diameter() + space.min_spacing(), kappa) - 1e-9)
        return list(range(low, max(high, low + 1) + 1))

    def build_system(self, space: Space) -> CubeSystem:
        kappa = float(self.config.get('cubes.kappa', 2.0))
        if self.config.get('cubes.construction') == 'christ' or space.kind != 'euclidean':
            return build_christ_cubes(space, kappa, self.scale_range(space, kappa), seed=self.config.get('seed', 0))
        systems = build_shifted_grids(space, self.scale_range(space, 2.0))
        return systems[int(self.config.get('cubes.alpha', 0)) % len(systems)]

    def kernel(self) -> Optional[Kernel]:
        functionals = self.config.get('operator.functionals', [])
        if 'var-tsi' in functionals or self.config.get('operator.mode') == 'singular':
            return parse_kernel(self.config.get('operator.kernel'))
        return None

    def policy(self) -> ThresholdPolicy:
        sparse = self.config.get('sparse')
        return ThresholdPolicy(a=float(sparse['a']), b=float(sparse['b']), growth=float(sparse['growth']),
                               max_rounds=int(sparse['max_rounds']))

    def functions(self, space: Space) -> List[Tuple[str, int, np.ndarray]]:
        """Every configured (kind, seed, values) test function."""
        seed = int(self.config.get('seed', 0))
        out = []
        for kind in self.config.get('function.kinds'):
            for trial in range(int(self.config.get('function.trials', 1))):
                out.append((kind, seed + trial, parse_function(kind, space, seed + trial)))
        return out

    def _report(self, kind: str, body: Dict[str, Any], passed: bool, rows: List[Dict[str, Any]],
                columns: List[str]) -> Dict[str, Any]:
        body = dict(body, cases=rows)
        report = self.exporter.build_report(kind, body, self.config.config_hash(), passed)
        files = [self.exporter.export_report(report, kind), self.exporter.export_table(rows, kind, columns)]
        return {'report': report, 'files': files}

    @staticmethod
    def _result() -> Dict[str, Any]:
        return {'success': False, 'error': None, 'stats': {}, 'report': None, 'files': []}

    # Domination

    def _cases(self, space: Space, system: CubeSystem, f: np.ndarray, table: ProfileTable,
               kernel: Optional[Kernel], r: float, names: List[str]) -> List[Tuple[str, float, np.ndarray, PairFunctional]]:
        """(functional, lambda, lhs field, pair functional) for every configured case."""
        cases = []
        for name in names:
            if name == 'var-av':
                lhs = variation_field(space, f, r, 'averages', homogeneous=False, table=table)
                cases.append((name, math.nan, lhs, WindowFunctional(system, table, 'averages', 'variation', r=r)))
            elif name == 'var-tsi':
                lhs = variation_field(space, f, r, 'singular', kernel, homogeneous=False, table=table)
                cases.append((name, math.nan, lhs, WindowFunctional(system, table, 'singular', 'variation', r=r)))
            elif name == 'jump-av':
                for lam in parse_ladder(self.config.get('operator.lambda_ladder')):
                    lhs = jump_field(space, f, lam, 'averages', table=table)
                    cases.append((name, lam, lhs, WindowFunctional(system, table, 'averages', 'jump', lam=lam)))
        return cases

    def _dominate(self, system: CubeSystem, f: np.ndarray, lhs: np.ndarray,
                  functional: PairFunctional) -> Dict[str, Any]:
        dilate = float(self.config.get('sparse.dilate', 1.0))
        family = build_sparse_family(system, functional, f, policy=self.policy(), dilate=dilate)
        report = verify_domination(lhs, family, f, functional.exponent, dilate)
        return {
            'constant': report.constant,
            'violations': int(report.violations.size),
            'carleson': family.carleson,
            'sparse': family.witness.success,
            'cubes': len(family),
            'certified': functional.certified,
            'quantiles': report.quantiles(),
        }

    def run_domination(self) -> Dict[str, Any]:
        """Measured pointwise domination constants across grid sizes and r."""
        result = self._result()
        try:
            self.config.validate('domination')
            kernel = self.kernel()
            names = list(self.config.get('operator.functionals'))
            r = float(self.config.get('operator.r'))
            rows: List[Dict[str, Any]] = []
            failure = None
            for size in self.config.get('sizes.domination'):
                try:
                    space = self.build_space(size)
                    system = self.build_system(space)
                    for kind, seed, f in self.functions(space):
                        table = ProfileTable(space, f, kernel)
                        for name, lam, lhs, functional in self._cases(space, system, f, table, kernel, r, names):
                            row = {'size': size, 'function': kind, 'seed': seed, 'functional': name, 'r': r,
                                   'lambda': lam}
                            row.update(self._dominate(system, f, lhs, functional))
                            rows.append(row)
                    logger.info(f"Domination at size {size}: {len(rows)} cases so far")
                except BudgetError as e:
                    failure = f"budget: {e}"
                    logger.warning(f"Stopping domination run at size {size}: {e}")
                    break

            sweep = self._r_sweep(kernel) if failure is None else []
            body = self._domination_summary(rows, sweep)
            body['failure'] = failure
            passed = failure is None and body['checks']['all']
            result.update(self._report('domination', body, passed, rows,
                                       ['size', 'function', 'seed', 'functional', 'r', 'lambda', 'constant',
                                        'violations', 'carleson', 'sparse', 'cubes', 'certified']))
            result['stats'] = {'cases': len(rows), 'sizes': len({row['size'] for row in rows}), 'passed': passed}
            result['success'] = True
        except ConfigError:
            raise
        except Exception as e:
            logger.exception("Domination run failed")
            result['error'] = str(e)
        return result

    def _r_sweep(self, kernel: Optional[Kernel]) -> List[Dict[str, Any]]:
        """Domination constant and constant (r - 2)/r for each variation functional on the smallest grid."""
        names = [name for name in self.config.get('operator.functionals') if name in ('var-av', 'var-tsi')]
        sweep = [float(r) for r in self.config.get('operator.r_sweep') or []]
        if not sweep or not names:
            return []
        r_values = sorted(set(sweep) | {self.reference_r()})
        size = min(self.config.get('sizes.domination'))
        space = self.build_space(size)
        system = self.build_system(space)
        kind, seed, f = self.functions(space)[0]
        table = ProfileTable(space, f, kernel)
        out = []
        for name in names:
            for r in r_values:
                _, _, lhs, functional = self._cases(space, system, f, table, kernel, r, [name])[0]
                measured = self._dominate(system, f, lhs, functional)
                out.append({'functional': name, 'r': r, 'constant': measured['constant'],
                            'normalized': measured['constant'] * (r - 2.0) / r})
            logger.info(f"r sweep for {name}: {len(r_values)} values of r on size {size}")
        return out

    def reference_r(self) -> float:
        """Configured r when it exceeds 2, else the median of the sweep."""
        r = float(self.config.get('operator.r'))
        if r > 2:
            return r
        return float(np.median([float(v) for v in self.config.get('operator.r_sweep')]))

    def _domination_summary(self, rows: List[Dict[str, Any]], sweep: List[Dict[str, Any]]) -> Dict[str, Any]:
        thresholds = self.config.get('thresholds')
        per_functional: Dict[str, Dict[str, Any]] = {}
        for name in sorted({row['functional'] for row in rows}):
            by_size: Dict[int, float] = {}
            for row in rows:
                if row['functional'] == name:
                    by_size[row['size']] = max(by_size.get(row['size'], 0.0), row['constant'])
            per_functional[name] = {
                'constants': {str(size): value for size, value in sorted(by_size.items())},
                'size_spread': spread(list(by_size.values())),
                'certified': all(row['certified'] for row in rows if row['functional'] == name),
            }

        sparse_ok = all(row['sparse'] and row['carleson'] <= CARLESON_LIMIT for row in rows)
        violations = sum(row['violations'] for row in rows)
        stable = all(entry['size_spread'] < thresholds['size_stability'] for entry in per_functional.values())
        r_ref = self.reference_r() if sweep else math.nan
        bands = {name: r_band([entry for entry in sweep if entry['functional'] == name], r_ref)
                 for name in sorted({entry['functional'] for entry in sweep})}
        # two-sided spread of constant (r - 2)/r, recorded only
        spreads = {name: spread([entry['normalized'] for entry in sweep if entry['functional'] == name])
                   for name in bands}
        band = max(bands.values()) if bands else 1.0
        checks = {
            'sparse_families': sparse_ok,
            'no_violations': violations == 0,
            'size_stability': stable,
            'r_band': band < thresholds['r_band'],
        }
        checks['all'] = bool(rows) and all(checks.values())
        return {
            'functionals': per_functional,
            'r_sweep': sweep,
            'r_reference': r_ref,
            'r_band': band,
            'r_bands': bands,
            'r_spreads': spreads,
            'violations': violations,
            'checks': checks,
        }

    # Weighted

    def weights_for(self, space: Space, p: float) -> List[Tuple[str, Weight, Weight]]:
        """(label, w, sigma) over the configured sweep."""
        w_spec = self.config.get('weights.w')
        names = [f"power:{a:g}" for a in self.config.get('weights.sweep')] if w_spec == 'power' else [w_spec]
        pairs = []
        for name in names:
            w = get_weight(name, space)
            sigma = w.dual(p) if self.config.get('weights.sigma') == 'dual' else w.power(-1.0, f"1/({name})")
            pairs.append((name, w, sigma))
        return pairs

    def run_weighted(self) -> Dict[str, Any]:
        """Weighted norm ratios against characteristic-built bounds across a weight sweep."""
        result = self._result()
        try:
            self.config.validate('weighted')
            p = float(self.config.get('weights.p'))
            r = float(self.config.get('operator.r'))
            functionals = self.config.get('operator.functionals')
            ladder = parse_ladder(self.config.get('operator.lambda_ladder')) if 'jump-av' in functionals else []
            space = self.build_space(int(self.config.get('sizes.weighted')), centered=True, extent=2.0)
            system = self.build_system(space)
            kind, seed, f = self.functions(space)[0]
            rows = []
            for name, w, sigma in self.weights_for(space, p):
                fs = f * sigma.values
                table = ProfileTable(space, fs)
                lhs = variation_field(space, fs, r, 'averages', homogeneous=False, table=table)
                row = {'weight': name, 'sigma': sigma.name, 'p': p, 'lhs_norm': weighted_norm(space, lhs, p, w),
                       'f_norm': weighted_norm(space, f, p, sigma),
                       'strong_ratio': strong_weighted_ratio(system, lhs, f, w, sigma, p),
                       'weak_ratio': weak_weighted_ratio(system, lhs, f, w, sigma, p)}
                if ladder:
                    jumps = np.max([jump_field(space, fs, lam, 'averages', table=table) for lam in ladder], axis=0)
                    row['jump_strong_ratio'] = strong_weighted_ratio(system, jumps, f, w, sigma, p)
                row.update(characteristics(system, w, sigma, p))
                rows.append(row)
                logger.info(f"Weight {name}: ratio {row['strong_ratio']:.4g}, [w,sigma]={row['two_weight']:.4g}")

            thresholds = self.config.get('thresholds')
            band = spread([row['strong_ratio'] for row in rows])
            growth = spread([row['two_weight'] for row in rows])
            body = {
                'function': kind,
                'seed': seed,
                'band': band,
                'characteristic_growth': growth,
                'growth_reached': growth >= thresholds['characteristic_growth'],
                'ainfty_convention': rows[0]['ainfty_convention'] if rows else None,
                'checks': {'band': band < thresholds['weighted_band']},
            }
            passed = body['checks']['band']
            columns = ['weight', 'sigma', 'p', 'lhs_norm', 'f_norm', 'strong_ratio', 'weak_ratio', 'jump_strong_ratio',
                       'two_weight', 'w_ap', 'w_ainfty', 'sigma_ainfty']
            result.update(self._report('weighted', body, passed, rows, columns))
            result['stats'] = {'weights': len(rows), 'passed': passed}
            result['success'] = True
        except ConfigError:
            raise
        except BudgetError as e:
            result['error'] = f"budget: {e}"
        except Exception as e:
            logger.exception("Weighted run failed")
            result['error'] = str(e)
        return result

    # Weak (1,1)

    def _weak_case(self, space: Space, system: CubeSystem, f: np.ndarray, kernel: Optional[Kernel],
                   ladder: List[float]) -> Dict[str, Any]:
        norm = float(space.integral(np.abs(f)).real)
        mode = self.config.get('operator.mode')
        square = short_variation_square(space, system, f, mode, kernel,
                                        aperture=float(self.config.get('operator.aperture', 1.0)))
        if norm == 0:
            return {'norm': 0.0, 'exact': 0.0, 'ladder': 0.0, 'majorant': 0.0, 'maximal': 0.0,
                    'level_sets_empty': not bool(np.any(square > 0))}
        top = float(square.max())
        swept = max((lam * top * space.weights[square > lam * top].sum() for lam in ladder), default=0.0)
        majorant = max(weak_lp_quasinorm(space, martingale_majorant_field(system, f, lam), 1.0) for lam in ladder)
        return {
            'norm': norm,
            'exact': weak_lp_quasinorm(space, square, 1.0) / norm,
            'ladder': float(swept) / norm,
            'majorant': majorant / norm,
            'maximal': max(maximal_weak_ratio(system, f, lam) for lam in ladder),
            'level_sets_empty': False,
        }

    def run_weak11(self) -> Dict[str, Any]:
        """sup over lambda of lambda mu{S f > lambda} / ||f||_1 across grid sizes."""
        result = self._result()
        try:
            self.config.validate('weak11')
            kernel = self.kernel() if self.config.get('operator.mode') == 'singular' else None
            ladder = parse_ladder(self.config.get('operator.lambda_ladder'))
            rows = []
            failure = None
            for size in self.config.get('sizes.weak11'):
                try:
                    space = self.build_space(size)
                    system = self.build_system(space)
                    for kind, seed, f in self.functions(space):
                        row = {'size': size, 'function': kind, 'seed': seed}
                        row.update(self._weak_case(space, system, f, kernel, ladder))
                        rows.append(row)
                    logger.info(f"Weak (1,1) at size {size} done")
                except BudgetError as e:
                    failure = f"budget: {e}"
                    logger.warning(f"Stopping weak (1,1) run at size {size}: {e}")
                    break

            thresholds = self.config.get('thresholds')
            trials: Dict[str, List[float]] = {}
            for row in rows:
                trials.setdefault(f"{row['function']}#{row['seed']}", []).append(row['exact'])
            spreads = {key: spread(values) for key, values in trials.items()}
            checks = {
                'finite': all(math.isfinite(row['exact']) and math.isfinite(row['majorant']) for row in rows),
                'size_stability': all(value < thresholds['size_stability'] for value in spreads.values()),
                'maximal_weak_bound': all(row['maximal'] <= 1.0 + 1e-12 for row in rows),
            }
            checks['all'] = bool(rows) and all(checks.values())
            body = {
                'constant': max((row['exact'] for row in rows), default=0.0),
                'majorant_constant': max((row['majorant'] for row in rows), default=0.0),
                'spreads': spreads,
                'checks': checks,
                'failure': failure,
            }
            passed = failure is None and checks['all']
            result.update(self._report('weak11', body, passed, rows,
                                       ['size', 'function', 'seed', 'norm', 'exact', 'ladder', 'majorant',
                                        'maximal', 'level_sets_empty']))
            result['stats'] = {'cases': len(rows), 'passed': passed}
            result['success'] = True
        except ConfigError:
            raise
        except Exception as e:
            logger.exception("Weak (1,1) run failed")
            result['error'] = str(e)
        return result


def run_domination_experiment(config: ExperimentConfig, output_dir: Optional[str] = None) -> Dict[str, Any]:
    return ExperimentRunner(config, output_dir).run_domination()


def run_weighted_experiment(config: ExperimentConfig, output_dir: Optional[str] = None) -> Dict[str, Any]:
    return ExperimentRunner(config, output_dir).run_weighted()


def run_weak11_experiment(config: ExperimentConfig, output_dir: Optional[str] = None) -> Dict[str, Any]:
    return ExperimentRunner(config, output_dir).run_weak11()
