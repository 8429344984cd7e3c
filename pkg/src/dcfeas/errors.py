"""Exception hierarchy.

Every error raised by the package derives from :class:`DCFeasError`; the
validation errors also derive from :class:`ValueError` so callers that only
care about bad input can catch that.
"""


class DCFeasError(Exception):
    """Base class for all package errors."""


# -- network -----------------------------------------------------------------

class NetworkError(DCFeasError, ValueError):
    """Invalid network description."""


class DisconnectedGraph(NetworkError):
    pass


class NonpositiveConductance(NetworkError):
    pass


class NoLoadsOrNoSources(NetworkError):
    pass


class InvalidEdge(NetworkError):
    pass


class NotKirchhoff(NetworkError):
    """A directly supplied matrix is not a valid Kirchhoff block."""


class SingularBlock(DCFeasError):
    pass


# -- matrix analysis ---------------------------------------------------------

class NotZMatrix(DCFeasError, ValueError):
    pass


class Reducible(DCFeasError, ValueError):
    pass


class NotSymmetric(DCFeasError, ValueError):
    pass


class NonpositiveNu(DCFeasError, ValueError):
    pass


# -- power flow maps ---------------------------------------------------------

class NonpositiveSourceVoltage(DCFeasError, ValueError):
    pass


class CoreInvariantViolation(DCFeasError):
    pass


class NonpositiveVoltage(DCFeasError, ValueError):
    pass


class LambdaNotAdmissible(DCFeasError, ValueError):
    pass


class MuNotAdmissible(DCFeasError, ValueError):
    pass


class InvalidNu(DCFeasError, ValueError):
    pass


class DimensionMismatch(DCFeasError, ValueError):
    pass


# -- operating point ---------------------------------------------------------

class StepFailure(DCFeasError):
    """Continuation could not proceed; ``theta`` is the last accepted parameter."""

    def __init__(self, message: str, theta: float):
        super().__init__(f"{message} (last theta={theta:.17g})")
        self.theta = theta


class SingularJacobian(DCFeasError):
    pass


class NoConvergence(DCFeasError):
    pass


# -- feasibility -------------------------------------------------------------

class NegativeDemand(DCFeasError, ValueError):
    pass


class TooManySubsets(DCFeasError, ValueError):
    pass


class InvalidP(DCFeasError, ValueError):
    pass
