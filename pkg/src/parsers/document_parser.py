"""
Document Parser - Load space, cube system and sparse family JSON documents
"""

import json
import logging
from pathlib import Path
from typing import Dict, Any, Optional

from core import settings
from core.errors import DocumentError
from analysis.sparse import SparseFamily
from geometry.dyadic import CubeSystem
from geometry.space import Space

logger = logging.getLogger(__name__)


def read_document(file_path: str, schema: Optional[str] = None) -> Dict[str, Any]:
    """Read a JSON document and check its schema tag."""
    path = Path(file_path)
    if not path.exists():
        raise DocumentError(f"document not found: {file_path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise DocumentError(f"invalid JSON in {file_path}: {e}")
    if not isinstance(data, dict):
        raise DocumentError(f"{file_path} does not hold a JSON object")
    if schema is not None and data.get('schema') != schema:
        raise DocumentError(f"{file_path}: expected schema {schema}, got {data.get('schema')}")
    return data


def load_space(file_path: str) -> Space:
    data = read_document(file_path, settings.SPACE_SCHEMA)
    logger.debug(f"Loaded {data.get('kind')} space from {file_path}")
    return Space.from_dict(data)


def load_system(file_path: str) -> CubeSystem:
    return CubeSystem.from_dict(read_document(file_path, settings.SYSTEM_SCHEMA))


def load_family(file_path: str, system: Optional[CubeSystem] = None) -> SparseFamily:
    """A sparse family document embeds its cube system unless one is supplied."""
    data = read_document(file_path, settings.FAMILY_SCHEMA)
    try:
        system = system or CubeSystem.from_dict(data['system'])
        return SparseFamily.from_dict(data, system)
    except (KeyError, IndexError, TypeError) as e:
        raise DocumentError(f"malformed sparse family document {file_path}: {e}")
