"""Exception hierarchy shared by all modules."""


class KSError(Exception):
    """Base class for every error raised by ksliouville."""


class DomainError(KSError, ValueError):
    """Input outside the domain of an operation."""


class SupportOverflowError(DomainError):
    """A geometric transform would push mass out of the truncated domain."""


class CFLError(DomainError):
    """Requested time step exceeds the admissible explicit step."""

    def __init__(self, message, admissible_dt):
        super().__init__(message)
        self.admissible_dt = admissible_dt


class ConvergenceError(KSError):
    """An iterative solver ran out of budget before meeting its tolerance."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class ConcentrationOverflow(KSError):
    """Gibbs exponent overflow; upstream this is read as concentration."""


class BlowUp(KSError):
    """Blow-up sentinel fired during time evolution.

    Not a failure of the code: the evolving density concentrated past the
    sentinel threshold. The state at the moment of detection is attached.
    """

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state
