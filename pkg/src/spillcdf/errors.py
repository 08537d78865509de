"""Exception hierarchy.

Every error raised by the package derives from :class:`SpillCdfError`; the CLI
maps the three families below onto its exit codes.
"""

from __future__ import annotations


class SpillCdfError(Exception):
    """Base class for all package errors."""


class QueryValidationError(SpillCdfError, ValueError):
    """Malformed input: bad indices, shapes, distributions or spec files."""


class QueryRangeError(QueryValidationError):
    """An order-statistic index falls outside ``[1, n]`` or ``d > n``."""


class InvalidDistributionError(QueryValidationError):
    """A CDF or conditional provider produced an impossible probability vector."""


class ResourceLimitError(SpillCdfError):
    """A table or enumeration would exceed its configured size cap."""


class NumericalCheckError(SpillCdfError):
    """Two routes that must agree disagreed beyond tolerance."""
