"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractViolation(RuntimeError):
    """A caller broke an operation's precondition (usually a scheduler bug)."""


class LayoutError(RuntimeError):
    """The deployment could not be built (e.g. small-cell placement failed)."""


class NoMeasurement(LookupError):
    """A KPI has no samples to be computed from; distinct from a zero value."""


class UndefinedGain(ZeroDivisionError):
    """An exposure gain was requested against a zero baseline."""


class SimulationFault(RuntimeError):
    """Internal inconsistency detected by the event loop."""
