"""Exception types shared across the package.

The split matters for the CLI and HTTP service, which map these onto
exit codes / status codes: configuration problems (2 / 400), data
problems (3 / 422), numerical failures (4 / 500).
"""


class TempGPError(Exception):
    """Base class for all package errors."""


class ConfigError(TempGPError):
    """Invalid configuration: bad key, bad value, inconsistent settings."""


class DataError(TempGPError):
    """Invalid or unusable data: unreadable file, schema mismatch,
    non-monotone time, empty partition, constant column."""


class NumericalError(TempGPError):
    """A numerical routine failed beyond recovery (all restarts rejected,
    optimizer breakdown)."""


class NotPositiveDefiniteError(NumericalError):
    """A matrix expected to be positive definite is not.

    Recoverable by design: likelihood code treats it as an objective
    of -inf and backtracks rather than aborting the fit.
    """
