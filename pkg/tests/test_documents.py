"""
Tests for JSON documents and report files
"""

import csv
import json

import numpy as np
import pytest

from core import settings
from core.errors import DocumentError
from analysis.sparse import SparseFamily
from exporters.document_exporter import export_family, export_space, export_system
from exporters.report_exporter import ReportExporter, dumps, to_plain
from parsers.document_parser import load_family, load_space, load_system, read_document


def test_space_document(tmp_path, line64):
    path = export_space(line64, str(tmp_path / 'space.json'))
    again = load_space(path)
    assert np.array_equal(again.coords, line64.coords)


def test_system_document(tmp_path, line_system):
    path = export_system(line_system, str(tmp_path / 'nested' / 'cubes.json'), with_diameters=True)
    again = load_system(path)
    assert again.scales == line_system.scales
    assert np.array_equal(again.labels[-3], line_system.labels[-3])


def test_family_document(tmp_path, line_system):
    family = SparseFamily(line_system, line_system.cubes_at(-2)).certify()
    path = export_family(family, str(tmp_path / 'family.json'))
    data = read_document(path, settings.FAMILY_SCHEMA)
    assert data['system']['schema'] == settings.SYSTEM_SCHEMA
    again = load_family(path)
    assert len(again) == 4
    assert again.carleson == 1.0
    assert load_family(path, line_system).system is line_system


def test_document_errors(tmp_path, line64):
    with pytest.raises(DocumentError):
        read_document(str(tmp_path / 'missing.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{', encoding='utf-8')
    with pytest.raises(DocumentError):
        read_document(str(broken))
    path = export_space(line64, str(tmp_path / 'space.json'))
    with pytest.raises(DocumentError):
        load_system(path)
    listing = tmp_path / 'list.json'
    listing.write_text('[1, 2]', encoding='utf-8')
    with pytest.raises(DocumentError):
        read_document(str(listing))


def test_to_plain():
    data = to_plain({'a': np.float64(np.nan), 'b': np.array([1, 2]), 'c': float('-inf'), 'd': 1 + 2j,
                     'e': np.bool_(True), 3: (np.int64(4),)})
    assert data == {'a': 'nan', 'b': [1, 2], 'c': '-inf', 'd': {'real': 1.0, 'imag': 2.0}, 'e': True, '3': [4]}
    assert dumps({'b': 1, 'a': 2}).index('"a"') < dumps({'b': 1, 'a': 2}).index('"b"')


def test_report_exporter(tmp_path):
    exporter = ReportExporter(str(tmp_path / 'out'))
    report = exporter.build_report('demo', {'value': 1.5}, 'abc', True)
    assert report['schema'] == settings.REPORT_SCHEMA
    assert report['module_versions'] == settings.MODULE_VERSIONS
    path = exporter.export_report(report, 'demo')
    with open(path, encoding='utf-8') as f:
        assert json.load(f)['body'] == {'value': 1.5}

    table = exporter.export_table([{'x': 1, 'y': np.float64(2.5), 'z': 'drop'}], 'demo', ['x', 'y'])
    with open(table, newline='', encoding='utf-8') as f:
        assert list(csv.DictReader(f)) == [{'x': '1', 'y': '2.5'}]

    field = exporter.export_field({'f': np.array([0.5, 1.0])}, 'field')
    with open(field, newline='', encoding='utf-8') as f:
        rows = list(csv.DictReader(f))
    assert rows[1] == {'point': '1', 'f': '1.0'}
    assert not list(tmp_path.joinpath('out').glob('.*'))
