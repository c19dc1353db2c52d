"""Exception types mapped to CLI exit codes.

Exit code convention: 0 success, 1 unexpected failure, 2 scene parse or
semantic error, 3 linear-solver failure, 4 quadrature failure, 5 validation
failure.
"""


class PldosError(Exception):
    """Base class for failures with a dedicated CLI exit code."""

    exit_code = 1


class SceneError(PldosError):
    """Scene file could not be parsed or is semantically invalid."""

    exit_code = 2

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SolverError(PldosError):
    """Coupled-dipole linear system could not be solved."""

    exit_code = 3


class QuadratureError(PldosError):
    """Frequency quadrature did not converge or its window is unusable."""

    exit_code = 4


class ValidationFailure(PldosError):
    """One or more built-in validation checks failed."""

    exit_code = 5
