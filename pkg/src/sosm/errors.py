"""Exception types shared across the toolkit."""


class SosmError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(SosmError, ValueError):
    """A caller-supplied parameter is out of its valid range."""


class DegenerateInputError(SosmError, ValueError):
    """Input data is structurally valid but numerically degenerate."""


class SizeError(SosmError, ValueError):
    """An input has the wrong shape, length, or exceeds a hard size cap."""


class NumericalError(SosmError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable values."""


class DivergenceError(NumericalError):
    """The optimizer encountered a non-finite loss."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class ConvergenceError(SosmError, RuntimeError):
    """The optimizer could not make progress within its adaptation budget."""


class StepSizeError(ParameterError):
    """A flow or descent step size violates a stability bound."""


class ParseError(SosmError, ValueError):
    """A cohort CSV file violates the input schema."""


class ReportError(SosmError, ValueError):
    """A report cannot be serialized under the report schema."""
