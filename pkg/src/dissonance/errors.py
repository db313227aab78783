"""Exception hierarchy shared by every module."""


class DissonanceError(Exception):
    """Base class for all library errors."""


class PointOutsideDomain(DissonanceError, ValueError):
    pass


class PoleHit(DissonanceError, ValueError):
    pass


class NoConvergence(DissonanceError, RuntimeError):
    pass


class DomainMismatch(DissonanceError, ValueError):
    pass


class InvalidIFS(DissonanceError, ValueError):
    pass


class BudgetExceeded(DissonanceError, RuntimeError):
    pass


class DegenerateCloud(DissonanceError, ValueError):
    pass


class LogBranchUndefined(DissonanceError, ValueError):
    pass


class InsufficientScales(DissonanceError, ValueError):
    pass


class EmptyBall(DissonanceError, ValueError):
    pass


class DimensionMismatch(DissonanceError, ValueError):
    pass


class BadBasis(DissonanceError, ValueError):
    pass


class EmptyWindow(DissonanceError, ValueError):
    pass


class ResolutionMismatch(DissonanceError, ValueError):
    pass


class ConfigInvalid(DissonanceError, ValueError):
    """Configuration failed validation; ``path`` is the JSON path of the fault."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path
