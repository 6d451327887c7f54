"""
Tests for experiment configuration, the experiment runner and the command line
"""

import json
from pathlib import Path

import pytest

from core.errors import ConfigError
from core.experiment_config import ExperimentConfig, tomllib
from core.experiment_runner import (ExperimentRunner, r_band, run_domination_experiment, run_weak11_experiment,
                                    run_weighted_experiment, spread)
from main import main

CONFIGS = Path(__file__).resolve().parents[1] / 'configs'

SMALL = {
    'sizes': {'domination': [16, 32], 'weak11': [16, 32], 'weighted': 17},
    'operator': {'functionals': ['var-av', 'jump-av'], 'r_sweep': [2.5], 'lambda_ladder': 'pow2:1:2'},
    'weights': {'sweep': [0.0, 0.5]},
}


@pytest.fixture
def small_config():
    return ExperimentConfig(SMALL)


def test_defaults_validate():
    config = ExperimentConfig()
    config.validate()
    assert config.get('operator.r') == 3.0
    assert config.get('operator.missing', 'x') == 'x'


def test_dotted_set_and_merge():
    config = ExperimentConfig({'operator': {'r': 4.0}})
    assert config.get('operator.kernel') == 'hilbert'
    config.set('sparse.extra.depth', 3)
    assert config.get('sparse.extra.depth') == 3


def test_hash_ignores_bookkeeping_keys():
    config = ExperimentConfig()
    before = config.config_hash()
    config.set('output_dir', 'elsewhere')
    config.set('threads', 8)
    config.set('name', 'renamed')
    assert config.config_hash() == before
    config.set('seed', 1)
    assert config.config_hash() != before


@pytest.mark.parametrize('key, value', [
    ('operator.kernel', 'laplace'),
    ('operator.r_sweep', [2.0, 3.0]),
    ('weights.p', 1.0),
    ('weights.w', 'gauss'),
    ('function.kinds', ['noise']),
    ('sizes.weak11', []),
    ('cubes.kappa', 3.0),
    ('operator.lambda_ladder', 'pow2:3:1'),
])
def test_invalid_values(key, value):
    config = ExperimentConfig()
    config.set(key, value)
    with pytest.raises(ConfigError):
        config.validate()


def test_load_json_and_save(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'seed': 7, 'operator': {'r': 5.0}}), encoding='utf-8')
    config = ExperimentConfig()
    assert config.load_config(str(path))
    assert config.get('seed') == 7
    assert config.get('operator.mode') == 'averages'
    assert config.save_config(str(tmp_path / 'saved.json'))
    again = ExperimentConfig()
    again.load_config(str(tmp_path / 'saved.json'))
    assert again.config_hash() == config.config_hash()


def test_load_errors(tmp_path):
    config = ExperimentConfig()
    with pytest.raises(ConfigError):
        config.load_config(str(tmp_path / 'missing.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{"seed": ', encoding='utf-8')
    with pytest.raises(ConfigError):
        config.load_config(str(broken))


@pytest.mark.skipif(tomllib is None, reason="needs tomllib")
def test_smoke_config_loads():
    config = ExperimentConfig()
    config.load_config(str(CONFIGS / 'smoke.toml'))
    config.validate()
    assert config.get('sizes.domination') == [32, 64]
    assert config.get('operator.functionals') == ['var-av', 'jump-av']


def test_spread():
    assert spread([2.0, 4.0, 3.0]) == 2.0
    assert spread([0.0, 0.0]) == 1.0
    assert spread([0.0, 1.0]) == float('inf')
    assert spread([]) == float('inf')
    assert spread([1.0, float('nan')]) == float('inf')


def test_r_band_tracks_growth_past_the_r_profile():
    rs = [2.1, 2.5, 3.0, 4.0, 8.0]

    def entries(constant):
        return [{'r': r, 'normalized': constant(r) * (r - 2.0) / r} for r in rs]

    assert r_band(entries(lambda r: 3.0), 3.0) == pytest.approx(2.25)
    assert r_band(entries(lambda r: r / (r - 2.0)), 3.0) == pytest.approx(1.0)
    assert r_band(entries(lambda r: (r / (r - 2.0)) ** 2), 3.0) == pytest.approx(7.0)
    assert r_band(entries(lambda r: 0.0), 3.0) == 1.0
    assert r_band(entries(lambda r: 3.0), 5.0) == float('inf')


def _read(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def test_domination_run(tmp_path, small_config):
    result = run_domination_experiment(small_config, str(tmp_path))
    assert result['success'], result['error']
    assert [Path(p).name for p in result['files']] == ['domination.json', 'domination.csv']
    report = _read(tmp_path / 'domination.json')
    assert report['kind'] == 'domination'
    assert report['config_hash'] == small_config.config_hash()
    assert report['passed'] == result['report']['passed']
    checks = report['body']['checks']
    assert set(checks) == {'sparse_families', 'no_violations', 'size_stability', 'r_band', 'all'}
    assert checks['all'] == report['passed']
    assert {case['functional'] for case in report['body']['cases']} == {'var-av', 'jump-av'}
    body = report['body']
    assert body['r_reference'] == 3.0
    assert [(entry['functional'], entry['r']) for entry in body['r_sweep']] == [('var-av', 2.5), ('var-av', 3.0)]
    assert set(body['r_bands']) == {'var-av'}
    assert checks['r_band']
    assert checks['sparse_families'] and checks['no_violations']


@pytest.mark.slow
def test_domination_run_sweeps_each_variation_functional(tmp_path):
    config = ExperimentConfig({
        'sizes': {'domination': [64, 128]},
        'operator': {'functionals': ['var-av', 'var-tsi'], 'r_sweep': [2.5, 4.0, 8.0]},
    })
    result = run_domination_experiment(config, str(tmp_path))
    assert result['success'], result['error']
    report = result['report']
    body = report['body']
    assert set(body['r_bands']) == {'var-av', 'var-tsi'}
    assert len(body['r_sweep']) == 2 * 4
    assert body['r_band'] == max(body['r_bands'].values())
    assert all(checks for checks in body['checks'].values()), body['checks']
    assert report['passed']


def test_reports_are_reproducible(tmp_path, small_config):
    first = run_weak11_experiment(small_config, str(tmp_path / 'a'))
    second = run_weak11_experiment(ExperimentConfig(SMALL), str(tmp_path / 'b'))
    assert first['success'] and second['success']
    for name in ('weak11.json', 'weak11.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    body = first['report']['body']
    assert body['checks']['finite']
    assert body['constant'] > 0


def test_weighted_run(tmp_path, small_config):
    result = run_weighted_experiment(small_config, str(tmp_path))
    assert result['success'], result['error']
    body = result['report']['body']
    assert body['ainfty_convention'] == 'fujii-wilson'
    assert len(body['cases']) == 2
    flat = body['cases'][0]
    assert flat['two_weight'] == pytest.approx(1.0)
    assert body['characteristic_growth'] >= 1.0


def test_runner_raises_config_errors(tmp_path):
    config = ExperimentConfig(SMALL)
    config.set('operator.functionals', ['var-tsi'])
    config.set('operator.kernel', 'laplace')
    with pytest.raises(ConfigError):
        ExperimentRunner(config, str(tmp_path)).run_domination()


def test_cli_space_and_cubes(tmp_path):
    out = str(tmp_path)
    assert main(['--out', out, 'space', 'build', '--side', '32']) == 0
    assert _read(tmp_path / 'space.json')['kind'] == 'euclidean'
    assert main(['--out', out, 'cubes', 'build', '--side', '32', '--scales=-5:0']) == 0
    assert sorted(p.name for p in tmp_path.glob('cubes-*.json')) == ['cubes-0.json', 'cubes-1.json', 'cubes-2.json']
    assert main(['--out', out, 'cubes', 'verify', '--system', str(tmp_path / 'cubes-0.json')]) == 0
    assert _read(tmp_path / 'cubes-verify.json')['passed']


def test_cli_operators(tmp_path):
    out = str(tmp_path)
    assert main(['--out', out, 'op', 'average', '--side', '32', '--function', 'const:2', '--t', '0.1,0.2']) == 0
    values = _read(tmp_path / 'op-average.json')['body']['values']
    assert [row['value'] for row in values] == pytest.approx([2.0, 2.0])


def test_cli_exit_codes(tmp_path):
    out = str(tmp_path)
    assert main(['--out', out, 'op', 'tsi', '--side', '32', '--kernel', 'laplace']) == 2
    assert main(['--out', out, 'space', 'stretch']) == 2
    assert main(['--out', out, 'cubes', 'build', '--side', '32', '--scales=0:-5']) == 2
    assert main(['--config', str(tmp_path / 'missing.toml'), 'experiment', 'weak11']) == 2
    assert main(['--help']) == 0
