"""Exception hierarchy shared by the modelling, scoring and search layers."""


class BasefracError(Exception):
    """Base class for every error raised by this package."""


class InvalidTreatmentError(BasefracError, ValueError):
    """A treatment combination or label lies outside the factorial space."""


class InvalidModelError(BasefracError, ValueError):
    """Malformed factorial space or requirement set."""


class DegenerateModelError(BasefracError):
    """The full-model matrix is rank deficient or the uniform measure is singular."""


class SingularDesignError(BasefracError):
    """The information matrix of an exact design is numerically singular."""

    def __init__(self, message, design=None):
        super().__init__(message)
        self.design = design


class NonConvergenceError(BasefracError):
    """The multiplicative algorithm hit its iteration cap.

    ``best`` carries the last iterate and ``gap`` the value of the
    optimality check at that iterate.
    """

    def __init__(self, message, best=None, gap=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.gap = gap
        self.iterations = iterations


class NoValidScaleError(BasefracError):
    """No multiplier makes the rounded masses add up to the requested run size."""


class NoInitialDesignError(BasefracError):
    """Procedure A could not find a rounded starting design of high efficiency."""


class DeadEndError(BasefracError):
    """Every candidate at a search step is singular.

    ``trace`` holds the partial search trace built so far.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class BudgetExceededError(BasefracError):
    """Exhaustive enumeration would exceed the configured budget."""

    def __init__(self, message, required=None, budget=None):
        super().__init__(message)
        self.required = required
        self.budget = budget
