"""
Exception hierarchy for the Kelvin-Voigt beam laboratory
The pipeline maps ConfigError to exit code 1 and NumericalError to exit code 2
"""


class BeamLabError(Exception):
    """Base class for every error raised by the laboratory"""


class ConfigError(BeamLabError, ValueError):
    """Invalid configuration file, override or parameter set"""


class NumericalError(BeamLabError, RuntimeError):
    """A numerical stage failed (quadrature, time stepping, linear solve, fit)"""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach its tolerance within the interval budget"""


class SimulationError(NumericalError):
    """Non-finite state detected during time integration"""

    def __init__(self, message: str, step_index: int):
        super().__init__(message)
        self.step_index = step_index


class ResolventBreakdownError(NumericalError):
    """Sparse factorization of the shifted system failed"""

    def __init__(self, message: str, lam: float):
        super().__init__(message)
        self.lam = lam


class FitError(NumericalError):
    """Not enough usable samples for a log-log fit"""


class RateProgramError(NumericalError):
    """The decay-rate program has an empty feasible region"""


class InequalityViolation(NumericalError):
    """An empirical ratio exceeded the proven bracket bound"""
