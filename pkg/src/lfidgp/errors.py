"""Exception hierarchy shared across the package."""


class LFIError(Exception):
    """Base class for all errors raised by lfidgp."""


class InvalidHyperparameterError(LFIError, ValueError):
    pass


class InsufficientDataError(LFIError, ValueError):
    pass


class DomainError(LFIError, ValueError):
    """An argument lies outside the support of the operation."""


class ShapeError(LFIError, ValueError):
    pass


class NumericalFailureError(LFIError, ArithmeticError):
    """Raised when a factorization fails even after jitter escalation."""


class ModelStateError(LFIError, RuntimeError):
    """Operation requires a model state (trained, registered index) that is missing."""


class InvalidMapError(LFIError, ValueError):
    pass


class DegenerateVarianceError(LFIError, ValueError):
    pass


class ConfigError(LFIError, ValueError):
    pass


class SimulatorFailure(LFIError, RuntimeError):
    pass


class TrainingDivergedError(LFIError, FloatingPointError):
    """The training objective became non-finite.

    ``snapshot`` holds the parameter state of the last finite step.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot
