"""Exception hierarchy shared by all modules."""


class SpikedLSSError(Exception):
    """Base class for errors raised by this package."""


class SpectrumError(SpikedLSSError, ValueError):
    """Invalid population spectrum (spike below bulk, bad weights, ...)."""


class DomainError(SpikedLSSError, ValueError):
    """Argument outside the domain of a function (support point, pole, log cut)."""


class SolverError(SpikedLSSError, ArithmeticError):
    """Fixed-point / root solver failed to converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class ContourError(SpikedLSSError, RuntimeError):
    """Contour cannot be placed or a contour integrand is singular on it."""


class ConvergenceError(ContourError):
    """Quadrature did not converge within the allowed node budget."""


class ConfigError(SpikedLSSError, ValueError):
    """Malformed run configuration."""


class SimulationError(SpikedLSSError, RuntimeError):
    """Monte Carlo run produced too many invalid replications."""
