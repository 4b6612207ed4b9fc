EXIT_SUCCESS = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3


class BaseQSTException(Exception):
    """Base exception class for engine errors."""

    code = "error"

    def __init__(
        self,
        exit_code: int,
        detail: str,
    ) -> None:
        super().__init__(detail)
        self.exit_code = exit_code
        self.detail = detail


class ConfigException(BaseQSTException):
    """Raised when a configuration document or CLI argument is invalid."""

    code = "config"

    def __init__(self, detail: str) -> None:
        super().__init__(exit_code=EXIT_CONFIG_ERROR, detail=detail)


class OutOfRangeException(BaseQSTException):
    """Raised when a parameter falls outside its documented range."""

    code = "invalid-argument"

    def __init__(self, field: str, value: object, allowed: str) -> None:
        super().__init__(
            exit_code=EXIT_CONFIG_ERROR,
            detail=f"{field}={value!r} is outside the allowed range {allowed}",
        )
        self.field = field


class InvalidArgumentException(BaseQSTException):
    """Raised when an argument is malformed (non-finite, wrong type, ...)."""

    code = "invalid-argument"

    def __init__(self, detail: str) -> None:
        super().__init__(exit_code=EXIT_CONFIG_ERROR, detail=detail)


class InvalidDimensionException(BaseQSTException):
    """Raised when a Hilbert-space dimension is too small."""

    code = "invalid-dimension"

    def __init__(self, dim: int, minimum: int = 2) -> None:
        super().__init__(
            exit_code=EXIT_CONFIG_ERROR,
            detail=f"dimension {dim} is invalid, must be at least {minimum}",
        )


class OutOfSpaceException(BaseQSTException):
    """Raised when a state needs Fock levels beyond the cutoff."""

    code = "out-of-space"

    def __init__(self, resource: str, level: int, cutoff: int) -> None:
        super().__init__(
            exit_code=EXIT_CONFIG_ERROR,
            detail=f"{resource} needs Fock level {level} but cutoff is {cutoff}",
        )


class InvalidObservableException(BaseQSTException):
    """Raised when an observable is not Hermitian or has the wrong shape."""

    code = "invalid-observable"

    def __init__(self, detail: str) -> None:
        super().__init__(exit_code=EXIT_CONFIG_ERROR, detail=detail)


class InvalidStateException(BaseQSTException):
    """Raised when a matrix violates the density-matrix invariants."""

    code = "invalid-state"

    def __init__(self, detail: str) -> None:
        super().__init__(exit_code=EXIT_NUMERICAL_FAILURE, detail=detail)


class DegenerateException(BaseQSTException):
    """Raised when a normalization divides by (numerically) zero."""

    def __init__(self, code: str, detail: str) -> None:
        super().__init__(exit_code=EXIT_NUMERICAL_FAILURE, detail=detail)
        self.code = code


class ShapeMismatchException(BaseQSTException):
    """Raised when tensor shapes do not line up at a layer."""

    code = "shape-mismatch"

    def __init__(self, layer: str, expected: object, got: object) -> None:
        super().__init__(
            exit_code=EXIT_CONFIG_ERROR,
            detail=f"layer '{layer}' expected shape {expected}, got {got}",
        )
        self.layer = layer


class DivergenceException(BaseQSTException):
    """Raised when an optimization produces NaN or infinite values."""

    code = "divergence"

    def __init__(self, detail: str) -> None:
        super().__init__(exit_code=EXIT_NUMERICAL_FAILURE, detail=detail)


class UnknownKindException(BaseQSTException):
    """Raised when an enum-like selector has an unsupported value."""

    code = "unknown-kind"

    def __init__(self, resource: str, value: str) -> None:
        super().__init__(
            exit_code=EXIT_CONFIG_ERROR,
            detail=f"unknown {resource} '{value}'",
        )


class NotFoundException(BaseQSTException):
    """Raised when a referenced artifact does not exist."""

    code = "not-found"

    def __init__(self, resource: str, identifier: str) -> None:
        super().__init__(
            exit_code=EXIT_CONFIG_ERROR,
            detail=f"{resource} with identifier '{identifier}' not found",
        )


class TruncationWarning(UserWarning):
    """Emitted when a requested state is poorly represented at the cutoff."""
