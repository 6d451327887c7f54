"""
Experiment Config - Load, validate, save and hash experiment configurations
"""

import copy
import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Dict, Any, List, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    tomllib = None

from core import settings
from core.errors import ConfigError

logger = logging.getLogger(__name__)

FUNCTIONALS = ('var-av', 'var-tsi', 'jump-av')
CONSTRUCTIONS = ('shifted', 'christ')
SIGMA_RULES = ('dual', 'inverse')
KINDS = ('euclidean', 'heisenberg')

# keys that do not change any computed number
_UNHASHED = ('output_dir', 'threads', 'name')

_WEIGHT = re.compile(r'^(const|power:[-+]?[\d.]+(?:[eE][-+]?\d+)?|checkerboard:[\d.]+(?:[eE][-+]?\d+)?)$')


class ExperimentConfig:
    """Manages experiment configuration documents for the harness."""

    def __init__(self, data: Optional[Dict[str, Any]] = None):
        self.config_path: Optional[str] = None
        self.config_data: Dict[str, Any] = self.get_default_config()
        if data:
            self.update(data)

    def get_default_config(self) -> Dict[str, Any]:
        """Get the default configuration structure."""
        return {
            'schema': settings.CONFIG_SCHEMA,
            'name': 'Untitled Experiment',
            'seed': 0,
            'threads': 1,
            'output_dir': 'out',
            'space': {
                'kind': 'euclidean',
                'dimension': 1,
                'side_count': 256,
                'spacing': None,
                'centered': False,
            },
            'sizes': {
                'domination': [256, 512, 1024],
                'weak11': [128, 256, 512],
                'weighted': 257,
            },
            'cubes': {
                'construction': 'shifted',
                'kappa': 2.0,
                'scales': None,
                'alpha': 0,
            },
            'operator': {
                'mode': 'averages',
                'kernel': 'hilbert',
                'functionals': ['var-av', 'jump-av', 'var-tsi'],
                'r': 3.0,
                'r_sweep': [2.1, 2.5, 3.0, 4.0, 8.0],
                'lambda_ladder': 'pow2:0:6',
                'aperture': 1.0,
            },
            'function': {
                'kinds': ['random'],
                'trials': 1,
            },
            'weights': {
                'w': 'power',
                'sigma': 'inverse',
                'p': 2.0,
                'sweep': [0.0, 0.25, 0.5, 0.75],
            },
            'sparse': {
                'dilate': 1.0,
                'a': 4.0,
                'b': 4.0,
                'growth': 2.0,
                'max_rounds': 64,
            },
            'thresholds': {
                'size_stability': 2.0,
                'r_band': 4.0,
                'weighted_band': 4.0,
                'characteristic_growth': 10.0,
            },
        }

    # Loading and saving

    def load_config(self, file_path: str) -> bool:
        """Load a JSON or TOML configuration over the defaults."""
        path = Path(file_path)
        try:
            if path.suffix.lower() == '.toml':
                if tomllib is None:
                    raise ConfigError("TOML configurations need Python 3.11 or later")
                with open(path, 'rb') as f:
                    data = tomllib.load(f)
            else:
                with open(path, 'r', encoding='utf-8') as f:
                    data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"configuration not found: {file_path}")
        except (json.JSONDecodeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"cannot parse configuration {file_path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"configuration {file_path} is not a table")
        self.config_data = self.get_default_config()
        self.update(data)
        self.config_path = str(path)
        logger.info(f"Loaded configuration {file_path}")
        return True

    def save_config(self, file_path: Optional[str] = None) -> bool:
        """Save the configuration as JSON."""
        try:
            if file_path:
                self.config_path = file_path
            elif not self.config_path:
                return False
            with open(self.config_path, 'w', encoding='utf-8') as f:
                json.dump(self.config_data, f, indent=2, sort_keys=True, ensure_ascii=False)
            return True
        except OSError as e:
            logger.error(f"Error saving configuration: {e}")
            return False

    # Access

    def update(self, data: Dict[str, Any]) -> None:
        """Merge nested sections into the current document."""
        for key, value in data.items():
            if isinstance(value, dict) and isinstance(self.config_data.get(key), dict):
                self.config_data[key].update(copy.deepcopy(value))
            else:
                self.config_data[key] = copy.deepcopy(value)

    def get(self, dotted: str, default: Any = None) -> Any:
        """Value at a dotted path such as 'operator.r'."""
        node: Any = self.config_data
        for part in dotted.split('.'):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, dotted: str, value: Any) -> None:
        parts = dotted.split('.')
        node = self.config_data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    def get_config_data(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config_data)

    def get_name(self) -> str:
        return self.config_data.get('name', 'Untitled Experiment')

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every key that affects results."""
        data = {k: v for k, v in self.config_data.items() if k not in _UNHASHED}
        canonical = json.dumps(data, sort_keys=True, separators=(',', ':'), ensure_ascii=True)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    # Validation

    def validate(self, experiment: Optional[str] = None) -> None:
        """Check registry names, ranges and budgets before any compute."""
        from analysis.kernels import get_kernel
        from parsers.spec_parser import FUNCTION_KINDS, parse_ladder

        errors: List[str] = []
        data = self.config_data
        if data.get('schema') != settings.CONFIG_SCHEMA:
            errors.append(f"schema must be {settings.CONFIG_SCHEMA}")
        if not isinstance(data.get('seed'), int):
            errors.append("seed must be an integer")

        space = data['space']
        if space.get('kind') not in KINDS:
            errors.append(f"space.kind must be one of {KINDS}")

        sizes = data['sizes']
        for key in ('domination', 'weak11'):
            values = sizes.get(key)
            if not isinstance(values, list) or not values or any(not isinstance(v, int) or v < 2 for v in values):
                errors.append(f"sizes.{key} must be a nonempty list of integers >= 2")
            elif max(values) > settings.POINT_BUDGET:
                errors.append(f"sizes.{key} exceeds the point budget {settings.POINT_BUDGET}")
        if not isinstance(sizes.get('weighted'), int) or not 3 <= sizes['weighted'] <= settings.POINT_BUDGET:
            errors.append("sizes.weighted must be an integer in [3, point budget]")

        cubes = data['cubes']
        if cubes.get('construction') not in CONSTRUCTIONS:
            errors.append(f"cubes.construction must be one of {CONSTRUCTIONS}")
        if float(cubes.get('kappa', 0)) <= 1:
            errors.append("cubes.kappa must exceed 1")
        if cubes.get('construction') == 'shifted' and float(cubes.get('kappa', 2)) != 2.0:
            errors.append("shifted grids have kappa 2")

        operator = data['operator']
        if operator.get('mode') not in ('averages', 'singular'):
            errors.append("operator.mode must be 'averages' or 'singular'")
        functionals = operator.get('functionals') or []
        unknown = [name for name in functionals if name not in FUNCTIONALS]
        if unknown or not functionals:
            errors.append(f"operator.functionals must be drawn from {FUNCTIONALS}, got {functionals}")
        needs_kernel = 'var-tsi' in functionals or operator.get('mode') == 'singular'
        if needs_kernel:
            try:
                get_kernel(str(operator.get('kernel')))
            except ConfigError as e:
                errors.append(str(e))
        if float(operator.get('r', 0)) < 1:
            errors.append("operator.r must be at least 1")
        if any(float(r) <= 2 for r in operator.get('r_sweep') or []):
            errors.append("operator.r_sweep values must exceed 2")
        if experiment in ('weak11', 'domination') or 'jump-av' in functionals:
            if operator.get('lambda_ladder') in (None, '', []):
                errors.append("operator.lambda_ladder is missing")
            else:
                try:
                    parse_ladder(operator['lambda_ladder'])
                except ConfigError as e:
                    errors.append(str(e))

        function = data['function']
        kinds = function.get('kinds') or []
        bad = [k for k in kinds if str(k).partition(':')[0] not in FUNCTION_KINDS]
        if bad or not kinds:
            errors.append(f"function.kinds must be drawn from {FUNCTION_KINDS}, got {kinds}")
        if not isinstance(function.get('trials'), int) or function['trials'] < 1:
            errors.append("function.trials must be a positive integer")

        weights = data['weights']
        if float(weights.get('p', 0)) <= 1:
            errors.append("weights.p must exceed 1")
        if weights.get('sigma') not in SIGMA_RULES:
            errors.append(f"weights.sigma must be one of {SIGMA_RULES}")
        w = str(weights.get('w'))
        if w == 'power':
            if not weights.get('sweep'):
                errors.append("weights.sweep is empty")
        elif not _WEIGHT.match(w):
            errors.append(f"Unknown weight: {w}")

        sparse = data['sparse']
        if float(sparse.get('dilate', 0)) < 1:
            errors.append("sparse.dilate must be at least 1")
        if float(sparse.get('growth', 0)) <= 1:
            errors.append("sparse.growth must exceed 1")

        if errors:
            raise ConfigError('; '.join(errors))
