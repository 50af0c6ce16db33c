"""Exception hierarchy shared by every module."""


class LaunderError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LaunderError, ValueError):
    """Alphabets or array dimensions do not line up."""


class DomainError(LaunderError, ValueError):
    """An argument lies outside its mathematical domain (negative mass, NaN, ...)."""


class DegenerateInputError(LaunderError, ValueError):
    """Input carries no usable mass (all-zero weights, empty observation list, zero marginal)."""


class PositivityError(LaunderError, ArithmeticError):
    """A kernel entry needed as a divisor vanished where its numerator is positive."""


class NumericalFailure(LaunderError, ArithmeticError):
    """An iterate became non-finite.

    Attributes:
        iteration: index of the offending iteration, if known.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class BudgetExceeded(LaunderError):
    """A brute-force enumeration would exceed the configured evaluation budget."""

    def __init__(self, required, budget):
        super().__init__(f"grid enumeration needs {required} evaluations, budget is {budget}")
        self.required = required
        self.budget = budget


class FileFormatError(LaunderError, ValueError):
    """A data file parsed but does not have the documented structure."""
