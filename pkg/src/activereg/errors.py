"""Exception hierarchy shared by every module of the package."""


class ActiveRegError(Exception):
    """Base class for all errors raised by activereg."""


class DomainError(ActiveRegError, ValueError):
    """An argument lies outside the domain of the requested function."""


class ShapeError(ActiveRegError, ValueError):
    """Array dimensions do not agree."""


class NumericFailure(ActiveRegError, ArithmeticError):
    """An iterative kernel failed to converge."""


class RankDeficiencyError(ActiveRegError, ArithmeticError):
    """A matrix required to be positive definite is singular or indefinite.

    ``null_directions`` holds the eigenvectors (as columns) whose eigenvalues
    fell below the positive-definiteness cutoff, when they are known.
    """

    def __init__(self, message, null_directions=None):
        super().__init__(message)
        self.null_directions = null_directions


class BudgetError(ActiveRegError, ValueError):
    """Labeling budget is inconsistent with the stream length or support size."""


class StateError(ActiveRegError, RuntimeError):
    """A streaming state machine was used outside its valid lifecycle."""


class SampleTooSmallError(ActiveRegError, ValueError):
    """A Monte-Carlo estimate has too few qualifying sample rows."""


class MomentInconsistencyError(ActiveRegError, ValueError):
    """Moments supplied for whitened coordinates are impossible (E[x^4] < 1)."""


class DegenerateSupportError(ActiveRegError, RuntimeError):
    """The stage-one Lasso recovered an empty support."""


class ParseError(ActiveRegError, ValueError):
    """Input file could not be parsed; carries the offending row and column."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
