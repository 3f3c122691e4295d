"""Exception types shared across the package.

The CLI maps these onto exit codes: config errors -> 2, assumption
violations (overlap / positivity / degenerate variance) -> 3,
enumeration-cap errors -> 4.
"""


class ParameterError(ValueError):
    """An argument is outside its legal range."""


class OverlapError(RuntimeError):
    """A requested exposure has probability zero for some unit."""

    def __init__(self, message, units=()):
        super().__init__(message)
        self.units = tuple(units)


class PositivityError(RuntimeError):
    """A joint exposure probability required by an estimator is zero."""


class EnumerationCapError(RuntimeError):
    """Instance too large for exact enumeration."""


class CompletenessError(KeyError):
    """A potential-outcome table is missing a reachable exposure cell."""


class DegenerateInputError(ValueError):
    """All variance/bias inputs are zero; the optimization has no solution."""


class ContractError(RuntimeError):
    """Inputs do not match the setting a closed form requires."""


class ConfigError(ValueError):
    """Experiment configuration failed schema validation."""


class AssumptionError(RuntimeError):
    """A runtime assumption check failed (e.g. vanishing variance)."""
