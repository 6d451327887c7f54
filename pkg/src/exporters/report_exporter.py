"""
Report Exporter - Deterministic JSON reports and CSV tables, written atomically
"""

import csv
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Any, Sequence

import numpy as np

from core import settings

logger = logging.getLogger(__name__)


def to_plain(value: Any) -> Any:
    """numpy scalars and arrays to JSON types; non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if isinstance(value, (complex, np.complexfloating)):
        return {'real': to_plain(value.real), 'imag': to_plain(value.imag)}
    return value


def write_atomic(output_path: str, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_path = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(handle, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(temp_path, path)
    except Exception:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise


def dumps(data: Dict[str, Any]) -> str:
    return json.dumps(to_plain(data), indent=2, sort_keys=True, ensure_ascii=False) + '\n'


class ReportExporter:
    """Writes versioned experiment reports and their plot tables."""

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)

    def build_report(self, kind: str, body: Dict[str, Any], config_hash: str, passed: bool) -> Dict[str, Any]:
        """Wrap a report body with schema, hash, versions and verdict."""
        return {
            'schema': settings.REPORT_SCHEMA,
            'kind': kind,
            'version': settings.VERSION,
            'config_hash': config_hash,
            'module_versions': dict(settings.MODULE_VERSIONS),
            'passed': bool(passed),
            'body': body,
        }

    def export_report(self, report: Dict[str, Any], name: str) -> str:
        """Write <name>.json and return its path."""
        output_path = self.output_dir / f"{name}.json"
        write_atomic(str(output_path), dumps(report))
        logger.info(f"Wrote report {output_path}")
        return str(output_path)

    def export_table(self, rows: Sequence[Dict[str, Any]], name: str, columns: List[str] = None) -> str:
        """Write <name>.csv with one row per record."""
        output_path = self.output_dir / f"{name}.csv"
        columns = columns or (list(rows[0].keys()) if rows else [])
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=columns, extrasaction='ignore', lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: to_plain(v) for k, v in row.items()})
        write_atomic(str(output_path), buffer.getvalue())
        logger.debug(f"Wrote table {output_path} ({len(rows)} rows)")
        return str(output_path)

    def export_field(self, fields: Dict[str, np.ndarray], name: str) -> str:
        """Pointwise fields side by side, indexed by point."""
        columns = ['point'] + list(fields)
        count = len(next(iter(fields.values()))) if fields else 0
        rows = [dict(point=i, **{key: values[i] for key, values in fields.items()}) for i in range(count)]
        return self.export_table(rows, name, columns)
