"""Exception hierarchy shared by every module."""


class FlowError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(FlowError, ValueError):
    pass


class NotPSD(FlowError, ValueError):
    pass


class InfeasibleConstraints(FlowError, ValueError):
    pass


class KktInconsistent(FlowError, ValueError):
    pass


class NonpositiveTime(FlowError, ValueError):
    pass


class NewtonDivergence(FlowError, RuntimeError):
    pass


class AssumptionViolated(FlowError, ValueError):
    pass


class OutOfTheory(FlowError, ValueError):
    """No convergence theorem covers the parameter triple (p, q, s)."""


class BadSpan(FlowError, ValueError):
    pass


class IntegrationError(FlowError, RuntimeError):
    """Base for integrator failures; ``t`` is the last time with a good state."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class StepUnderflow(IntegrationError):
    pass


class MaxStepsExceeded(IntegrationError):
    pass


class NonFiniteState(IntegrationError):
    pass


class TimeMismatch(FlowError, ValueError):
    pass


class InsufficientSamples(FlowError, ValueError):
    pass


class NonPositiveValues(FlowError, ValueError):
    pass


class ExponentOverflow(FlowError, OverflowError):
    pass


class NothingToPlot(FlowError, ValueError):
    pass


class ConfigInvalid(FlowError, ValueError):
    pass
