"""Exception hierarchy.

Validation errors (bad input, violated invariant, unsupported configuration)
map to CLI exit code 1; numerical failures map to exit code 2.
"""


class RuinkitError(Exception):
    exit_code = 1


class ValidationError(RuinkitError):
    exit_code = 1


class NumericalError(RuinkitError):
    exit_code = 2


# graph_core
class NonSymmetricMu(ValidationError):
    pass


class NegativeHolding(ValidationError):
    pass


class Disconnected(ValidationError):
    pass


class BallTruncated(ValidationError):
    pass


class BallTooLarge(ValidationError):
    pass


# models
class SpecInvalid(ValidationError):
    pass


class NoClosedForm(ValidationError):
    pass


class NoSurrogate(ValidationError):
    pass


# domain
class DisconnectedU(ValidationError):
    pass


class EmptyBoundary(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


class NoAdmissiblePoint(ValidationError):
    pass


# absorbing / spectral / doob
class SolverFailure(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class TooLargeForDense(ValidationError):
    pass


class NoConvergence(NumericalError):
    pass


class NonPositivePhi(NumericalError):
    pass


class TruncationBudgetExceeded(NumericalError):
    pass


# estimates
class AmbientTruncated(ValidationError):
    pass


class OutOfSector(ValidationError):
    pass


class UnsupportedFace(ValidationError):
    pass


class CylinderTruncated(ValidationError):
    pass


# montecarlo
class AllCensored(NumericalError):
    pass


class InvariantViolation(ValidationError):
    """A named invariant failed during a verification suite."""

    def __init__(self, name, detail=""):
        self.name = name
        self.detail = detail
        super().__init__(f"invariant violated: {name}" + (f" ({detail})" if detail else ""))
