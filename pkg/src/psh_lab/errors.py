"""Exception types raised across psh_lab."""


class PshLabError(Exception):
    """Base class for all library errors."""


class ParameterError(PshLabError, ValueError):
    pass


class NonConvergence(PshLabError):
    def __init__(self, message, iterations=None, residual=None, **diagnostics):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.diagnostics = diagnostics


class LossOfPositivity(NonConvergence):
    """A Newton step left the positive cone and the damping floor was reached."""


class PositivityViolation(PshLabError, ValueError):
    pass


class NonIntegrable(PshLabError):
    pass


class NonNormalizable(PshLabError):
    pass


class NormalizationError(PshLabError, ValueError):
    pass


class ZeroMass(PshLabError):
    pass


class EmptyCandidates(PshLabError, ValueError):
    pass


class FitUnstable(PshLabError):
    pass


class PreconditionError(PshLabError, ValueError):
    pass
