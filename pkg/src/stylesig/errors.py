"""Exception hierarchy shared across the package.

The three base classes map onto the CLI exit codes: ConfigError -> 2,
DataError -> 3, InternalError -> 4.
"""


class StylesigError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class ConfigError(StylesigError):
    """Invalid configuration or parameters supplied by the caller."""

    exit_code = 2


class DataError(StylesigError):
    """Input data unusable (missing, malformed, or degenerate)."""

    exit_code = 3


class InternalError(StylesigError):
    """Contract violation inside the library."""

    exit_code = 4


class ManifestError(ConfigError):
    """Corpus manifest is not a well-formed list of entries."""


class DuplicateIdError(ConfigError):
    """Two manifest entries share the same text id."""


class MissingFileError(DataError):
    """A file referenced by a manifest or config does not exist."""


class DegenerateInputError(DataError):
    """Input collapses to nothing usable (e.g. empty token stream)."""


class InsufficientTokensError(DataError):
    """Fewer tokens than one text unit."""


class UnitLengthMismatchError(ConfigError):
    """Two unit sequences with different unit lengths cannot be commingled."""


class MatrixFormatError(DataError):
    """Feature-matrix interchange file violates its own header."""


class DegenerateClusteringError(DataError):
    """All rows identical; 2-means has no nontrivial partition."""


class DegenerateGeometryError(DataError):
    """Zero-norm row or centroid makes cosine similarity undefined."""


class ContractViolationError(InternalError):
    """An internal precondition was violated."""
