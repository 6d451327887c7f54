#!/usr/bin/env python3
"""
varcz - Command Line Entry Point
Numerical verification of variational and sparse estimates on discretized spaces of homogeneous type.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, Any, List, Optional

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from core import settings
from core.errors import ConfigError, VarczError
from core.experiment_config import ExperimentConfig
from core.experiment_runner import ExperimentRunner
from analysis.fitting import fit_exponential_decay
from analysis.kernels import validate_kernel
from analysis.operators import (MODES, ProfileTable, almost_orthogonality, average, jump_field, short_variation,
                                truncated_si, variation_field)
from analysis.sparse import SparseFamily, WindowFunctional, build_sparse_family, sparse_operator, verify_domination
from analysis.weights import characteristics
from exporters.document_exporter import export_family, export_space, export_system
from exporters.report_exporter import ReportExporter
from geometry.dyadic import (build_christ_cubes, build_shifted_grids, measure_small_boundary,
                             verify_cube_axioms)
from geometry.space import (Space, build_euclidean_grid, build_heisenberg_grid, check_doubling, check_quasi_triangle,
                            check_regularity)
from parsers.document_parser import load_family, load_space, load_system
from parsers.spec_parser import parse_function, parse_kernel, parse_scales, parse_t_grid, parse_weight

logger = logging.getLogger('varcz')

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got '{text}'")


def _args_hash(args: argparse.Namespace) -> str:
    data = {k: v for k, v in vars(args).items() if k not in ('out', 'threads', 'verbose', 'quiet', 'handler')}
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _emit(args: argparse.Namespace, kind: str, body: Dict[str, Any], passed: bool,
          rows: Optional[List[Dict[str, Any]]] = None) -> int:
    exporter = ReportExporter(args.out)
    report = exporter.build_report(kind, body, _args_hash(args), passed)
    exporter.export_report(report, kind)
    if rows:
        exporter.export_table(rows, kind)
    return EXIT_PASS if passed else EXIT_FAIL


def _space(args: argparse.Namespace) -> Space:
    """--space document, or a grid from the build flags."""
    if getattr(args, 'space', None):
        return load_space(args.space)
    if args.kind == 'heisenberg':
        return build_heisenberg_grid(args.side, args.spacing or 1.0 / args.side)
    return build_euclidean_grid(args.dimension, args.side, args.spacing or 1.0 / args.side, centered=args.centered)


def _function(args: argparse.Namespace, space: Space) -> np.ndarray:
    return parse_function(args.function, space, args.seed)


# space

def cmd_space_build(args: argparse.Namespace) -> int:
    space = _space(args)
    export_space(space, str(Path(args.out) / 'space.json'))
    print(f"{space.kind} space with {space.n} points")
    return EXIT_PASS


def cmd_space_check(args: argparse.Namespace) -> int:
    space = _space(args)
    if args.radii:
        radii = parse_t_grid(args.radii)
    else:
        radii = np.geomspace(2 * space.min_spacing(), space.diameter() / 4, 8)
    regularity = check_regularity(space, radii, seed=args.seed)
    triangle = check_quasi_triangle(space, args.samples, seed=args.seed)
    doubling = check_doubling(space, radii, seed=args.seed)
    body = {
        'space': space.to_dict() if space.kind != 'points' else {'kind': 'points', 'n': space.n},
        'regularity': regularity.to_dict(),
        'quasi_triangle': triangle.to_dict(),
        'doubling': doubling,
        'diameter': space.diameter(),
        'diameter_method': space.diameter_method,
    }
    return _emit(args, 'space-check', body, triangle.passed)


# cubes

def cmd_cubes_build(args: argparse.Namespace) -> int:
    space = _space(args)
    scales = parse_scales(args.scales)
    if args.construction == 'shifted':
        systems = build_shifted_grids(space, scales)
        for i, system in enumerate(systems):
            export_system(system, str(Path(args.out) / f"cubes-{i}.json"), with_diameters=args.diameters)
        print(f"{len(systems)} shifted systems over scales {scales[0]}..{scales[-1]}")
    else:
        system = build_christ_cubes(space, args.kappa, scales, seed=args.seed)
        export_system(system, str(Path(args.out) / 'cubes.json'), with_diameters=args.diameters)
        print(f"Christ cubes over scales {scales[0]}..{scales[-1]}: a0={system.a0:.4g}, C1={system.C1:.4g}")
    return EXIT_PASS


def cmd_cubes_verify(args: argparse.Namespace) -> int:
    system = load_system(args.system)
    report = verify_cube_axioms(system, args.a0_min)
    body = {'axioms': report.to_dict(), 'a0': system.a0, 'C1': system.C1, 'construction': system.construction}
    return _emit(args, 'cubes-verify', body, report.passed)


def cmd_cubes_boundary(args: argparse.Namespace) -> int:
    system = load_system(args.system)
    report = measure_small_boundary(system, _floats(args.taus))
    passed = bool(report.eta > 0)
    rows = [{'tau': t, 'inner': i, 'outer': o, 'total': s}
            for t, i, o, s in zip(report.taus, report.inner, report.outer, report.total)]
    return _emit(args, 'cubes-boundary', report.to_dict(), passed, rows)


# op

def cmd_op_average(args: argparse.Namespace) -> int:
    space = _space(args)
    f = _function(args, space)
    rows = [{'t': t, 'value': float(np.real(average(space, f, t, args.point)))} for t in _floats(args.t)]
    return _emit(args, 'op-average', {'point': args.point, 'values': rows}, True, rows)


def cmd_op_tsi(args: argparse.Namespace) -> int:
    space = _space(args)
    f = _function(args, space)
    kernel = parse_kernel(args.kernel)
    kernel.check_space(space)
    rows = [{'t': t, 'value': float(np.real(truncated_si(space, kernel, f, t, args.point)))} for t in _floats(args.t)]
    body = {'point': args.point, 'kernel': kernel.to_dict(), 'values': rows}
    if args.validate:
        report = validate_kernel(space, kernel, args.samples, seed=args.seed)
        body['validation'] = report.to_dict()
        return _emit(args, 'op-tsi', body, report.passed, rows)
    return _emit(args, 'op-tsi', body, True, rows)


def cmd_op_shortvar(args: argparse.Namespace) -> int:
    system = load_system(args.system)
    space = system.space
    f = _function(args, space)
    kernel = parse_kernel(args.kernel) if args.mode == 'singular' else None
    field = short_variation(space, system, f, args.scale, args.mode, kernel, r=args.r, aperture=args.aperture)
    body = {'scale': args.scale, 'mode': args.mode, 'max': float(field.max()), 'mean': float(field.mean())}
    rows = [{'point': i, 'value': float(v)} for i, v in enumerate(field)]
    return _emit(args, 'op-shortvar', body, True, rows)


def cmd_op_orth(args: argparse.Namespace) -> int:
    space = _space(args)
    kernel = parse_kernel(args.kernel)
    scales = parse_scales(args.scales)
    base = scales[-1]
    matrices: Dict[int, np.ndarray] = {}
    rows = []
    for k in scales:
        norm = almost_orthogonality(space, kernel, base, k, args.kappa, seed=args.seed, matrices=matrices)
        rows.append({'k': base, 'k_prime': k, 'gap': base - k, 'norm': norm})
    fit = fit_exponential_decay([row['gap'] for row in rows], [row['norm'] for row in rows], base=args.kappa)
    passed = bool(fit.exponent > 0)
    return _emit(args, 'op-orth', {'norms': rows, 'decay': fit.to_dict()}, passed, rows)


# sparse

def _functional(args: argparse.Namespace, system, f: np.ndarray):
    kernel = parse_kernel(args.kernel) if args.functional == 'var-tsi' else None
    table = ProfileTable(system.space, f, kernel)
    if args.functional == 'var-av':
        return WindowFunctional(system, table, 'averages', 'variation', r=args.r), table
    if args.functional == 'var-tsi':
        return WindowFunctional(system, table, 'singular', 'variation', r=args.r), table
    return WindowFunctional(system, table, 'averages', 'jump', lam=args.lam), table


def _lhs(args: argparse.Namespace, table: ProfileTable) -> np.ndarray:
    space = table.space
    if args.functional == 'jump-av':
        return jump_field(space, table.f, args.lam, 'averages', table=table)
    mode = 'singular' if args.functional == 'var-tsi' else 'averages'
    return variation_field(space, table.f, args.r, mode, table.kernel, homogeneous=False, table=table)


def cmd_sparse_build(args: argparse.Namespace) -> int:
    system = load_system(args.system)
    f = _function(args, system.space)
    functional, _ = _functional(args, system, f)
    family = build_sparse_family(system, functional, f, dilate=args.dilate)
    export_family(family, str(Path(args.out) / 'family.json'))
    passed = family.witness.success and family.carleson <= 2.0 + 1e-12
    print(f"{len(family)} cubes, Carleson {family.carleson:.4g}")
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_sparse_verify(args: argparse.Namespace) -> int:
    family: SparseFamily = load_family(args.family)
    system = family.system
    f = _function(args, system.space)
    functional, table = _functional(args, system, f)
    lhs = _lhs(args, table)
    sparse = sparse_operator(system, family, f, functional.exponent, family.dilate)
    report = verify_domination(lhs, family, f, functional.exponent, sparse=sparse)
    body = {'domination': report.to_dict(), 'family': family.to_dict(), 'functional': functional.to_dict()}
    rows = [{'point': i, 'lhs': float(a), 'sparse': float(b), 'ratio': float(c)}
            for i, (a, b, c) in enumerate(zip(lhs, sparse, report.ratio))]
    return _emit(args, 'sparse-verify', body, report.passed, rows)


# weights

def cmd_weights_char(args: argparse.Namespace) -> int:
    system = load_system(args.system)
    w = parse_weight(args.weight, system.space)
    sigma = w.dual(args.p) if args.sigma == 'dual' else parse_weight(args.sigma, system.space)
    body = {'weight': w.to_dict(), 'sigma': sigma.to_dict(), 'characteristics': characteristics(system, w, sigma, args.p)}
    return _emit(args, 'weights-char', body, True)


# experiment

def cmd_experiment(args: argparse.Namespace) -> int:
    config = ExperimentConfig()
    if args.config:
        config.load_config(args.config)
    if args.seed is not None:
        config.set('seed', args.seed)
    if args.threads is not None:
        config.set('threads', args.threads)
    runner = ExperimentRunner(config, args.out)
    run = {'domination': runner.run_domination, 'weighted': runner.run_weighted, 'weak11': runner.run_weak11}
    result = run[args.verb]()
    if not result['success']:
        logger.error(f"Experiment failed: {result['error']}")
        return EXIT_FAIL
    for path in result['files']:
        print(path)
    return EXIT_PASS if result['report']['passed'] else EXIT_FAIL


# parser

def _add_space_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--space', help='space document; overrides the grid flags')
    parser.add_argument('--kind', choices=('euclidean', 'heisenberg'), default='euclidean')
    parser.add_argument('--dimension', type=int, default=1)
    parser.add_argument('--side', type=int, default=256)
    parser.add_argument('--spacing', type=float, default=None)
    parser.add_argument('--centered', action='store_true')


def _add_functional_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--functional', choices=('var-av', 'var-tsi', 'jump-av'), default='var-av')
    parser.add_argument('--r', type=float, default=3.0)
    parser.add_argument('--lambda', dest='lam', type=float, default=0.25)
    parser.add_argument('--kernel', default='hilbert')
    parser.add_argument('--function', default='random')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='varcz', description=__doc__.strip().splitlines()[1])
    parser.add_argument('--config', help='experiment configuration (JSON or TOML)')
    parser.add_argument('--out', default='out', help='output directory')
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--threads', type=int, default=None)
    parser.add_argument('--verbose', action='store_true')
    parser.add_argument('--quiet', action='store_true')
    modules = parser.add_subparsers(dest='module', required=True)

    space = modules.add_parser('space').add_subparsers(dest='verb', required=True)
    p = space.add_parser('build')
    _add_space_flags(p)
    p.set_defaults(handler=cmd_space_build)
    p = space.add_parser('check')
    _add_space_flags(p)
    p.add_argument('--radii', help="radius grid such as 'geom:0.01:0.2:8'")
    p.add_argument('--samples', type=int, default=10000)
    p.set_defaults(handler=cmd_space_check)

    cubes = modules.add_parser('cubes').add_subparsers(dest='verb', required=True)
    p = cubes.add_parser('build')
    _add_space_flags(p)
    p.add_argument('--construction', choices=('shifted', 'christ'), default='shifted')
    p.add_argument('--kappa', type=float, default=2.0)
    p.add_argument('--scales', required=True, help="scale range 'a:b'")
    p.add_argument('--diameters', action='store_true')
    p.set_defaults(handler=cmd_cubes_build)
    p = cubes.add_parser('verify')
    p.add_argument('--system', required=True)
    p.add_argument('--a0-min', type=float, default=None, help="inner-ball constant to check instead of the recorded a0")
    p.set_defaults(handler=cmd_cubes_verify)
    p = cubes.add_parser('boundary')
    p.add_argument('--system', required=True)
    p.add_argument('--taus', default='0.05,0.1,0.2,0.4')
    p.set_defaults(handler=cmd_cubes_boundary)

    op = modules.add_parser('op').add_subparsers(dest='verb', required=True)
    for verb, handler in (('average', cmd_op_average), ('tsi', cmd_op_tsi)):
        p = op.add_parser(verb)
        _add_space_flags(p)
        p.add_argument('--function', default='random')
        p.add_argument('--point', type=int, default=0)
        p.add_argument('--t', default='0.01,0.1')
        if verb == 'tsi':
            p.add_argument('--kernel', default='hilbert')
            p.add_argument('--validate', action='store_true')
            p.add_argument('--samples', type=int, default=200)
        p.set_defaults(handler=handler)
    p = op.add_parser('shortvar')
    p.add_argument('--system', required=True)
    p.add_argument('--function', default='random')
    p.add_argument('--mode', choices=MODES, default='averages')
    p.add_argument('--kernel', default='hilbert')
    p.add_argument('--scale', type=int, required=True)
    p.add_argument('--r', type=float, default=2.0)
    p.add_argument('--aperture', type=float, default=1.0)
    p.set_defaults(handler=cmd_op_shortvar)
    p = op.add_parser('orth')
    _add_space_flags(p)
    p.add_argument('--kernel', default='hilbert')
    p.add_argument('--kappa', type=float, default=2.0)
    p.add_argument('--scales', required=True, help="scale range 'a:b'; the top scale is paired with each")
    p.set_defaults(handler=cmd_op_orth)

    sparse = modules.add_parser('sparse').add_subparsers(dest='verb', required=True)
    p = sparse.add_parser('build')
    p.add_argument('--system', required=True)
    p.add_argument('--dilate', type=float, default=1.0)
    _add_functional_flags(p)
    p.set_defaults(handler=cmd_sparse_build)
    p = sparse.add_parser('verify')
    p.add_argument('--family', required=True)
    _add_functional_flags(p)
    p.set_defaults(handler=cmd_sparse_verify)

    weights = modules.add_parser('weights').add_subparsers(dest='verb', required=True)
    p = weights.add_parser('char')
    p.add_argument('--system', required=True)
    p.add_argument('--weight', default='const')
    p.add_argument('--sigma', default='dual', help="'dual' for w^(1-p') or a weight name")
    p.add_argument('--p', type=float, default=2.0)
    p.set_defaults(handler=cmd_weights_char)

    experiment = modules.add_parser('experiment')
    experiment.add_argument('verb', choices=('domination', 'weighted', 'weak11'))
    experiment.set_defaults(handler=cmd_experiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one verb and map the outcome to an exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_PASS

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    if args.threads is not None:
        settings.set_threads(args.threads)
    if args.module != 'experiment' and args.seed is None:
        args.seed = 0

    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except VarczError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAIL
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
