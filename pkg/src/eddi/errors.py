"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4. Everything else is a plain bug and exits 1.
"""


class EddiError(Exception):
    """Base class for all package errors."""


class ShapeError(EddiError):
    """An array, layer, or observation has an incompatible dimension."""


class CapabilityError(EddiError):
    """The requested computation is outside what this implementation supports."""


class NumericError(EddiError):
    """A non-finite value or invalid numeric state was produced."""


class ConfigError(EddiError):
    """An invalid configuration value or combination."""


class DataError(EddiError):
    """Problem with user-supplied data (files, rows, cells)."""


class IngestionError(DataError):
    """CSV or schema ingestion failed; message names the offending row/column."""


class CoverageError(DataError):
    """An aggregation is missing required (method, dataset, row) cells."""


class EvidenceError(EddiError):
    """Conditioning on an event of probability zero."""


class CheckpointError(EddiError):
    """A model file is truncated, corrupt, or from an unknown version."""
