"""
Document Exporter - Space, cube system and sparse family JSON documents
"""

import logging

from core import settings
from analysis.sparse import SparseFamily
from exporters.report_exporter import dumps, write_atomic
from geometry.dyadic import CubeSystem
from geometry.space import Space

logger = logging.getLogger(__name__)


def export_space(space: Space, output_path: str) -> str:
    write_atomic(output_path, dumps(space.to_dict()))
    return output_path


def export_system(system: CubeSystem, output_path: str, with_diameters: bool = False) -> str:
    """Cube system document with per-scale labels."""
    write_atomic(output_path, dumps(system.to_dict(with_diameters=with_diameters)))
    logger.info(f"Wrote {system.construction} cube system to {output_path}")
    return output_path


def family_document(family: SparseFamily, embed_system: bool = True) -> dict:
    data = family.to_dict()
    data['schema'] = settings.FAMILY_SCHEMA
    if embed_system:
        data['system'] = family.system.to_dict()
    return data


def export_family(family: SparseFamily, output_path: str, embed_system: bool = True) -> str:
    write_atomic(output_path, dumps(family_document(family, embed_system)))
    logger.info(f"Wrote sparse family of {len(family)} cubes to {output_path}")
    return output_path
