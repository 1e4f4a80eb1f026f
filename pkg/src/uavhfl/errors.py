class InvalidArgumentError(ValueError):
    pass


class ZeroMassError(ValueError):
    """An interference branch has no probability mass."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, estimate=None, abserr=None):
        super().__init__(message)
        self.estimate = estimate
        self.abserr = abserr


class NumericalError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass
