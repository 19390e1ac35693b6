from typing import List, Sequence


class MastError(Exception):
    """Base exception for surrogate building and experiment errors"""

    pass


class ContractViolationError(MastError, ValueError):
    """Raised when an operation receives arguments outside its contract"""

    pass


class ConfigurationError(MastError):
    """Raised for invalid fidelity, cost or experiment configuration"""

    pass


class AllocationError(MastError):
    """Raised when a budget plan cannot satisfy its per-level minimums"""

    pass


class ReportingError(MastError):
    """Raised when results cannot be normalized or aggregated"""

    pass


class UnknownProblemError(MastError, KeyError):
    """Raised when a benchmark name is not in the registry"""

    pass


class FactorizationError(MastError):
    """Raised when a covariance matrix stays indefinite after all jitter"""

    def __init__(self, message: str, jitter_history: Sequence[float] = ()):
        super().__init__(message)
        self.jitter_history: List[float] = list(jitter_history)


class FittingError(MastError):
    """Raised when every optimizer restart fails"""

    def __init__(self, message: str, jitter_history: Sequence[Sequence[float]] = ()):
        super().__init__(message)
        self.jitter_history: List[List[float]] = [list(h) for h in jitter_history]
