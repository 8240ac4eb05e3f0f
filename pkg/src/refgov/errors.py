"""Exception and warning types raised across the package."""

from __future__ import annotations


class RefGovError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(RefGovError, ValueError):
    pass


class SingularTransferMatrix(RefGovError):
    pass


class ImproperEntry(RefGovError):
    pass


class PoleAtOne(RefGovError):
    pass


class UnstableSystem(RefGovError):
    pass


class EmptyPolytope(RefGovError):
    pass


class Unbounded(RefGovError):
    pass


class Infeasible(RefGovError):
    pass


class NotFinitelyDetermined(RefGovError):
    """Raised when the admissible-set recursion hits its horizon cap.

    Attributes
    ----------
    worst_row : int or None
        Index (within the last batch) of the row with the largest excess.
    excess : float
        Amount by which that row's support exceeded its bound.
    """

    def __init__(self, msg, worst_row=None, excess=float("nan")):
        super().__init__(msg)
        self.worst_row = worst_row
        self.excess = excess


class EmptyRobustMas(RefGovError):
    pass


class InfeasibleStart(RefGovError):
    """The (state, previous input) pair handed to a governor is outside its set."""

    def __init__(self, msg, channel=None, violation=float("nan")):
        if channel is not None:
            msg = f"channel {channel}: {msg}"
        super().__init__(msg)
        self.channel = channel
        self.violation = violation


class UnstableInverse(RefGovError):
    pass


class SingularBStar(RefGovError):
    pass


class UnstableLoop(RefGovError):
    pass


class UnstableObserver(RefGovError):
    pass


class UnstableVertexLoop(RefGovError):
    pass


class SingularGBar(RefGovError):
    pass


class BothProjectionsInfeasible(RefGovError):
    pass


class ScenarioError(RefGovError, ValueError):
    """Scenario validation failure; ``path`` names the offending field."""

    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}")
        self.path = path


class StabilityNotCertified(UserWarning):
    """The small-gain test did not certify the decoupled loop."""
