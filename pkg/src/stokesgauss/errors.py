"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ValidationError(ValueError):
    """Loaded or constructed data violates a structural invariant."""


class TraceFormatError(ValidationError):
    """A trace CSV file could not be parsed.

    ``line`` is the 1-based line number in the file, or ``None`` when the
    problem is not tied to a single line.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NumericalConsistencyError(ArithmeticError):
    """A closed-form expression received a matrix it cannot describe."""


class ConvergenceError(RuntimeError):
    """Local refinement of an optimisation failed to converge."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message} ({self.diagnostics})" if diagnostics else message)
