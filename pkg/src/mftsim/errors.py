"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code so batch runs can be triaged
without parsing messages.
"""


class MftsimError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(MftsimError):
    """Invalid or unknown configuration input."""

    exit_code = 2


class InvariantViolationError(MftsimError):
    """A market/path invariant does not hold (singular volatility, negative rate, ...)."""

    exit_code = 3


class StrategyViolationError(MftsimError):
    """A strategy produced an inadmissible allocation (non-finite, bound breach, trading at zero risk premium)."""

    exit_code = 3


class NumericError(MftsimError):
    """Non-finite results in a simulation or estimator."""

    exit_code = 4


class QuadratureError(NumericError):
    """One-dimensional quadrature failed its self-consistency check."""

    exit_code = 4
