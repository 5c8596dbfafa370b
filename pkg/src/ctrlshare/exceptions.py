"""Exception types raised across the package."""


class CtrlShareError(Exception):
    """Base class for all package errors."""


class ModelFormatError(CtrlShareError):
    """A model file could not be parsed into a model."""


class ModelValidationError(CtrlShareError):
    """A model violates one or more invariants; ``report`` lists them."""

    def __init__(self, report):
        self.report = report
        lines = "\n".join(f"  - {v}" for v in report)
        super().__init__(f"invalid model ({len(report)} violation(s)):\n{lines}")


class InfeasibleActionError(CtrlShareError):
    """A strategy produced an action outside the feasible set."""


class InconsistentObservation(CtrlShareError):
    """An observed action or measurement has zero prior probability."""


class CombinatorialBlowup(CtrlShareError):
    """An enumeration would exceed its configured size cap."""


class MissingSuccessor(CtrlShareError):
    """A backup reached a belief point with no stored value."""


class ClosureViolation(MissingSuccessor):
    """A belief set is not closed under the filter map."""


class NonConvergence(CtrlShareError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)
