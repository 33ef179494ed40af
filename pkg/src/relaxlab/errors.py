"""Exception hierarchy.

Every exception carries an ``exit_code`` so the CLI can map failures onto its
documented contract (1 config, 2 numerical, 3 control condition not met).
"""


class RelaxLabError(Exception):
    exit_code = 1


class ConfigError(RelaxLabError, ValueError):
    """Invalid configuration or arguments."""

    exit_code = 1


class DomainError(RelaxLabError, ValueError):
    """Input outside the domain of a closed-form constant."""

    exit_code = 1


class InconsistentInputsError(DomainError):
    exit_code = 1


class FitError(RelaxLabError, ValueError):
    exit_code = 1


class NumericalError(RelaxLabError, RuntimeError):
    exit_code = 2


class CFLError(NumericalError, ConfigError):
    exit_code = 2


class MajorantViolation(NumericalError):
    exit_code = 2


class GccNotSatisfied(RelaxLabError):
    """Raised when a rate certificate is requested for a problem without control."""

    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
