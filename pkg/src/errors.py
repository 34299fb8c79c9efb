from typing import Optional


class KirchhoffError(Exception):
    """Marker base for every error raised by this package."""


# -------------------------------------------------------------------
# Validation errors (CLI exit code 1)
# -------------------------------------------------------------------

class ConfigError(KirchhoffError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = ""
        if line is not None:
            prefix = f"line {line}: "
        elif field is not None:
            prefix = f"{field}: "
        super().__init__(prefix + message)


class InvalidDomainError(KirchhoffError, ValueError):
    pass


class InvalidParameterError(KirchhoffError, ValueError):
    pass


class DomainMismatchError(KirchhoffError, ValueError):
    pass


class InvalidSourceError(KirchhoffError, ValueError):
    pass


class DegenerateSourceError(KirchhoffError, ValueError):
    pass


class ZeroFieldError(KirchhoffError, ValueError):
    pass


class DegenerateReductionError(KirchhoffError, ValueError):
    pass


class DegenerateCoefficientError(KirchhoffError, ValueError):
    pass


# -------------------------------------------------------------------
# Numerical failures (CLI exit code 2)
# -------------------------------------------------------------------

class IterationLimitError(KirchhoffError, RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")


class BallEscapeError(KirchhoffError, RuntimeError):
    def __init__(self, message: str, norm_sq: float):
        self.norm_sq = norm_sq
        super().__init__(message)


# -------------------------------------------------------------------
# Verification failures (CLI exit code 3)
# -------------------------------------------------------------------

class VerificationError(KirchhoffError, RuntimeError):
    def __init__(self, message: str, name: Optional[str] = None):
        self.name = name
        super().__init__(message)
