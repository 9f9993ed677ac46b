"""Exception types raised by the engine."""


class ParameterDomainError(ValueError):
    """A model or simulation parameter is outside its admissible domain."""


class NumericalError(RuntimeError):
    """A quadrature or series evaluation failed to reach the requested tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class CalibrationDomainError(ValueError):
    """Calibration impossible, e.g. the model survival curve vanishes."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class StructuralError(ValueError):
    """Grid/path data is missing information required by an operation."""


class ShapeError(ValueError):
    """Array lengths do not match the grid they are supposed to live on."""


class InconsistentShiftError(ValueError):
    """Negative shift: the shifted intensity is not a valid Cox intensity.

    Carries the offending parameter set so that callers can report or reject it.
    """

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params
