"""Exception types raised by the solvers."""


class AgePdeError(Exception):
    """Base class for all package errors."""


class DomainError(AgePdeError, ValueError):
    """Inputs outside the admissible domain of an operation."""


class ConfigError(AgePdeError, ValueError):
    """Malformed or inconsistent scenario configuration."""


class NoPositiveRoot(AgePdeError):
    """The growth map never reaches 1 on [0, inf), i.e. R0 < 1."""


class NoSteadyState(AgePdeError):
    """No candidate steady state passed the admissibility checks."""


class NoPositiveSteadyState(AgePdeError):
    """A positive steady state does not exist for these parameters."""


class AmbiguousSteadyState(AgePdeError):
    """More than one admissible steady state was found."""

    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = list(candidates)


class DivergedError(AgePdeError):
    """A simulation blew up or produced non-finite values."""

    def __init__(self, message, t_last, trajectory=None):
        super().__init__(message)
        self.t_last = t_last
        self.trajectory = trajectory
