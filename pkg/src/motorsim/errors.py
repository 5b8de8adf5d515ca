"""Exception hierarchy shared by all layers."""


class MotorSimError(Exception):
    """Base class for every error raised by motorsim."""


class ValidationError(MotorSimError, ValueError):
    """Parameters or configuration violate a model invariant."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NonPositiveRate(ValidationError):
    pass


class NegativeRate(ValidationError):
    pass


class NonPositiveFirstMoment(ValidationError):
    pass


class UnnormalizedDensity(ValidationError):
    pass


class QuadratureFailure(MotorSimError):
    pass


class DivergentMoment(MotorSimError):
    pass


class DegenerateRate(MotorSimError):
    """A closed form divides by an unbinding rate of zero."""


class RegimeError(MotorSimError):
    """Requested quantity does not exist in this force regime."""


class StepFailure(MotorSimError):
    pass


class InsufficientData(MotorSimError):
    pass


class DomainOverflow(MotorSimError):
    """Density reached the outflow boundary of the PDE grid."""


class ZeroVelocity(MotorSimError):
    pass


class OverflowRisk(MotorSimError):
    pass


class ConfigError(ValidationError):
    pass
