"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1,
numeric/oracle failures exit 2, and file-format or OS-level I/O problems
exit 3. Plain ``ValueError`` is reserved for programming errors such as
dimension mismatches.
"""


class SmdLabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SmdLabError):
    """Invalid configuration: unknown keys, bad values, inconsistent specs."""


class NumericError(SmdLabError):
    """Non-finite values or a numerically failed computation."""


class DomainError(NumericError):
    """Input outside a potential's domain (e.g. non-positive under entropy)."""


class DegenerateDataError(NumericError):
    """Data that breaks a required rank/conditioning assumption."""


class CapabilityError(NumericError):
    """Problem size exceeds what an operation is built to handle."""


class OracleError(NumericError):
    """An oracle could not certify a solution (never a silent wrong answer)."""


class ExperimentError(NumericError):
    """An experiment grid failed entirely."""


class FormatError(SmdLabError):
    """Malformed file contents (checkpoints, IDX data)."""


class DataError(SmdLabError):
    """A dataset request that cannot be satisfied."""
