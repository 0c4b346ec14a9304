"""Error hierarchy shared across the package.

Every failure the library raises deliberately derives from
:class:`MultiknockError`, which carries the process exit code the CLI maps it
to: 2 for data-level violations, 64 for command-line usage problems, 65 for
malformed input files.
"""

from __future__ import annotations


class MultiknockError(Exception):
    """Base class for all deliberate failures."""

    exit_code = 2


class DataError(MultiknockError):
    """A value-level violation: bad outcome values, NaN cells, unseen levels."""

    exit_code = 2


class DimensionError(DataError):
    """Shapes incompatible with the requested operation (e.g. n < 2p)."""


class DegenerateColumnError(DataError):
    """A column with zero variance where scaling or fitting needs spread."""


class BlockSingularityError(DataError):
    """A within-group Gram block is numerically singular."""


class ConvergenceError(DataError):
    """An iterative fit exceeded its iteration budget.

    ``payload`` holds whatever partial state the failing routine could save
    (last iterate, partial path), for diagnosis.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class FeasibilityError(DataError):
    """A matrix required to be positive semidefinite is not, beyond tolerance."""


class AlignmentError(DataError):
    """Group names disagree across datasets being combined."""


class ConfigError(DataError):
    """A simulation or pipeline configuration field is invalid or unknown."""


class FormatError(MultiknockError):
    """A file is structurally malformed (CSV shape, JSON syntax, bad version)."""

    exit_code = 65


class ParseError(FormatError):
    """A cell could not be parsed as its declared type."""


class SchemaError(FormatError):
    """A document violates its declared schema (missing/unknown fields)."""


class UsageError(MultiknockError):
    """Command-line arguments are invalid."""

    exit_code = 64
