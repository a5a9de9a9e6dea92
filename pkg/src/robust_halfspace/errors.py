"""Exception types raised across the package."""


class HalfspaceError(Exception):
    """Base class for library errors."""


class ZeroVector(HalfspaceError, ValueError):
    pass


class RejectionBudgetExceeded(HalfspaceError, RuntimeError):
    pass


class UnsupportedDimension(HalfspaceError, ValueError):
    pass


class UnknownId(HalfspaceError, KeyError):
    pass


class StrategyModelMismatch(HalfspaceError, ValueError):
    pass


class NonpositiveTau(HalfspaceError, ValueError):
    pass


class EmptySet(HalfspaceError, ValueError):
    pass


class ToleranceNotCertified(UserWarning):
    """Issued (not raised) when the hinge minimizer hits its iteration cap."""


class InfeasibleOrBudget(HalfspaceError, RuntimeError):
    def __init__(self, message, weights=None):
        super().__init__(message)
        self.weights = weights


class ZeroMass(HalfspaceError, ValueError):
    pass


class InvalidEpsilon(HalfspaceError, ValueError):
    pass


class RoundFailed(HalfspaceError, RuntimeError):
    def __init__(self, round_index, cause, stats=None):
        super().__init__(f"round {round_index} failed: {cause}")
        self.round_index = round_index
        self.cause = cause
        self.stats = stats if stats is not None else []


class ConfigError(HalfspaceError, ValueError):
    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class MissingResults(HalfspaceError, FileNotFoundError):
    pass
