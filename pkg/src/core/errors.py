"""
Errors - Exception hierarchy shared by all modules
"""


class VarczError(Exception):
    """Base class for every error raised by the library."""


class ConfigError(VarczError, ValueError):
    """Invalid experiment configuration or CLI arguments."""

    exit_code = 2


class BudgetError(VarczError):
    """A configured point, evaluation or matrix budget would be exceeded."""


class ScaleError(VarczError, ValueError):
    """A scale or radius is outside what the grid resolves."""


class ConstructionError(VarczError, ValueError):
    """A cube system or family could not be constructed."""


class RegularityError(VarczError, ValueError):
    """A validation run had no usable samples."""


class AdjacencyError(VarczError):
    """A query ball is not contained in any top-scale cube."""


class DocumentError(VarczError, ValueError):
    """A serialized document is malformed or has the wrong schema."""
