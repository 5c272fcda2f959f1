"""
Exception types raised by the engine.

Services raise these; the CLI turns them into exit codes and the
routers turn them into HTTP errors.
"""


class HypdampError(Exception):
    """Base class for every engine error."""


class ContractViolation(HypdampError, ValueError):
    """An operation was called with arguments outside its contract."""


class PreconditionFailed(HypdampError):
    """A hypothesis of an estimate does not hold for the given parameters."""

    def __init__(self, inequality: str, lhs: float, rhs: float, detail: str = ""):
        self.inequality = inequality
        self.lhs = lhs
        self.rhs = rhs
        message = f"precondition '{inequality}' fails: lhs={lhs!r} rhs={rhs!r}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class IntegrationFailure(HypdampError):
    """The mode integrator could not continue."""

    def __init__(self, reason: str, last_state, message: str = ""):
        self.reason = reason  # "step-underflow", "nonfinite" or "max-steps"
        self.last_state = last_state
        super().__init__(message or f"integration failed: {reason} at t={last_state.t!r}")


class ConstructionRejected(HypdampError):
    """The counterexample construction cannot be certified."""

    def __init__(self, inequality: str, k: int | None = None, detail: str = ""):
        self.inequality = inequality
        self.k = k
        where = f" at k={k}" if k is not None else ""
        message = f"construction rejected by '{inequality}'{where}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class ScenarioError(HypdampError):
    """A scenario file could not be parsed or validated."""

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")
