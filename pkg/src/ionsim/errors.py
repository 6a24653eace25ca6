"""Exception hierarchy shared by the simulation modules."""


class IonSimError(Exception):
    """Base class for all ionsim errors."""


class ConfigError(IonSimError, ValueError):
    """Invalid scenario or parameter input."""


class NumericalError(IonSimError, RuntimeError):
    """A numerical procedure failed or an invariant was violated."""


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnstableConfigurationError(NumericalError):
    pass


class UnphysicalModelError(NumericalError):
    pass


class SingularConfigurationError(NumericalError, ZeroDivisionError):
    pass
