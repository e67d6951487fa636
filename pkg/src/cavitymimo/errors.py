"""Exception types shared across the package."""


class CavityMimoError(Exception):
    """Base class for all package errors."""


class ConfigError(CavityMimoError, ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SingularChannel(CavityMimoError, ArithmeticError):
    """A channel realization has an eigenvalue at (or numerically below) zero."""

    def __init__(self, message, eigenvalues=None, seed=None):
        self.eigenvalues = eigenvalues
        self.seed = seed
        super().__init__(message)


class SingularResolvent(CavityMimoError, ArithmeticError):
    """The cavity resolvent cannot be inverted reliably."""

    def __init__(self, message, condition=float("inf")):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class InvalidSaddleRegion(CavityMimoError, ArithmeticError):
    """Order parameters left the region where every Z1 entry is positive."""


class UnsupportedProfile(CavityMimoError, ValueError):
    """Operation needs scalar (mode-independent) loss."""


class ConventionError(CavityMimoError, ArithmeticError):
    """Determinant bookkeeping produced a negative variance."""


class RunAborted(CavityMimoError, RuntimeError):
    """Monte Carlo run stopped because too many draws were singular."""

    def __init__(self, message, rejected=0, attempted=0):
        self.rejected = rejected
        self.attempted = attempted
        super().__init__(message)


class SaddleNotConverged(CavityMimoError, ValueError):
    """Saddle-point iteration stopped above tolerance."""

    def __init__(self, message, residual=float("nan")):
        self.residual = residual
        super().__init__(message)
