"""Exception taxonomy.

Every error carries the process exit code the CLI should use:
0 ok, 2 construction infeasible, 3 numerical failure, 4 bad configuration.
"""

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


class DuffingError(Exception):
    exit_code = EXIT_NUMERICAL


class ConfigError(DuffingError, ValueError):
    """Invalid parameters, detected before any work starts."""
    exit_code = EXIT_CONFIG


class DomainError(DuffingError, ValueError):
    """An argument outside the domain of an operation (h <= 0, the origin, ...)."""
    exit_code = EXIT_CONFIG


class NumericalError(DuffingError):
    exit_code = EXIT_NUMERICAL


class ChartRangeError(NumericalError):
    """Action or energy outside the tabulated chart; extend the table."""


class InvariantViolation(NumericalError):
    pass


class LemmaViolation(NumericalError):
    """A fitted exponent or constant falls outside its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ChartInconsistency(NumericalError):
    pass


class IntegrationError(NumericalError):
    def __init__(self, message, status=None, t=None):
        super().__init__(message)
        self.status = status
        self.t = t


class InfeasibleError(DuffingError):
    """The construction cannot proceed at this action (ramp overlap, non-monotone angle, ...)."""
    exit_code = EXIT_INFEASIBLE

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class ScheduleExhausted(InfeasibleError):
    """The stage formula gives zero cycles."""


class AmplitudeTooLarge(DomainError):
    pass


class EscapeDetected(Exception):
    """Not a failure: the action reached the cap during integration."""

    def __init__(self, t, theta, action):
        super().__init__(f"action {action:.6g} reached the cap at t={t:.17g}")
        self.t = t
        self.theta = theta
        self.action = action


class InsufficientData(ConfigError):
    """A log or grid too small for the requested analysis (an empty log, say)."""
