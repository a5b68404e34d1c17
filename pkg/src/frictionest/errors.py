"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class EstimationError(RuntimeError):
    """A data-driven estimate could not be formed from the supplied trace."""


class InfeasibleError(RuntimeError):
    """The excitation optimizer found no point satisfying the limits.

    ``best`` holds the least-violating trajectory seen, ``report`` the
    corresponding :class:`~frictionest.excitation.ExcitationReport`.
    """

    def __init__(self, message, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report


class SimulationFault(RuntimeError):
    """Raised when a closed-loop state stops being finite."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""
