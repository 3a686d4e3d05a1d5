"""Exception hierarchy shared by every module of the package."""


class DSOCSError(Exception):
    """Base class for all errors raised by :mod:`dsocs`."""


class SingularMatrixError(DSOCSError):
    pass


class ConvergenceError(DSOCSError):
    """Newton iteration hit its iteration cap without meeting the tolerance."""

    def __init__(self, message, x=None, residual_norm=None, iterations=None):
        super().__init__(message)
        self.x = x
        self.residual_norm = residual_norm
        self.iterations = iterations


class InsufficientDataError(DSOCSError):
    pass


class NonPositiveValueError(DSOCSError):
    pass


class DimensionError(DSOCSError):
    pass


class NoRootError(DSOCSError):
    pass


class AmbiguousRootError(DSOCSError):
    pass


class DegenerateVelocityError(DSOCSError):
    """Central-difference velocity vanished where a constraint divides by it."""


class ConstraintDegeneracyError(DSOCSError):
    pass


class InadmissibleStateError(DSOCSError):
    """A state violates constraints that the step cannot repair."""


class NotOnConstraintError(DSOCSError):
    pass


class FlowError(DSOCSError):
    """A step failed inside :func:`dsocs.core.flow`.

    ``index`` is the k of the failing triple (q_{k-1}, q_k, q_{k+1}) and
    ``trajectory`` holds every point computed before the failure.
    """

    def __init__(self, message, index, trajectory, cause=None):
        super().__init__(message)
        self.index = index
        self.trajectory = trajectory
        self.cause = cause
