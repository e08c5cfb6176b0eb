"""Exception types shared across the package.

Every exception carries a short machine-readable ``code`` that the command
line front end prints on failure.
"""

from __future__ import annotations


class GcsmError(Exception):
    code = "E_INTERNAL"


class InvalidArgumentError(GcsmError, ValueError):
    code = "E_INVALID_ARGUMENT"


class UnsupportedDimensionError(InvalidArgumentError):
    code = "E_UNSUPPORTED_DIMENSION"


class UnsupportedInputError(InvalidArgumentError):
    code = "E_UNSUPPORTED_INPUT"


class ConfigurationError(GcsmError, ValueError):
    code = "E_CONFIG"


class UnknownKernelError(InvalidArgumentError):
    code = "E_KERNEL_UNKNOWN"


class GmmComponentError(InvalidArgumentError):
    code = "E_GMM_Q"


class ModelIncompatibleError(GcsmError):
    code = "E_MODEL_INCOMPATIBLE"


class DatasetIntegrityError(GcsmError):
    code = "E_DATASET_INTEGRITY"

    def __init__(self, name: str, expected: int, found: int):
        super().__init__(
            f"dataset {name!r}: expected {expected} rows, found {found}"
        )
        self.name = name
        self.expected = expected
        self.found = found


class NumericalFailureError(GcsmError, ArithmeticError):
    """Raised when a factorization fails even at the largest jitter."""

    code = "E_NUMERICAL"

    def __init__(self, message: str, ladder=()):
        super().__init__(message)
        self.ladder = tuple(ladder)
