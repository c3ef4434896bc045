"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`MpsexcError`
and carries an ``exit_code`` used by the command-line front end: 2 for invalid
input, 3 for numerical failures.
"""


class MpsexcError(Exception):
    """Base class for all package errors."""

    exit_code = 3
    kind = "error"

    def record(self) -> dict:
        """Machine-readable description of the error."""
        return {"error": self.kind, "message": str(self), "exit_code": self.exit_code}


class ValidationError(MpsexcError, ValueError):
    """Malformed or out-of-range input."""

    exit_code = 2
    kind = "validation"


class ShapeMismatchError(ValidationError):
    kind = "shape-mismatch"


class NonFiniteError(ValidationError):
    kind = "non-finite"


class CapacityError(ValidationError):
    """A requested object would exceed the configured memory cap."""

    kind = "capacity"


class PreconditionError(ValidationError):
    """Input is well formed but violates an operation's precondition."""

    kind = "precondition"


class NumericalError(MpsexcError, ArithmeticError):
    """A numerical procedure failed or hit a singular configuration."""

    exit_code = 3
    kind = "numerical"


class NonInjectiveError(NumericalError):
    kind = "non-injective"


class NormalizationError(NumericalError):
    kind = "normalization"


class NearPoleError(NumericalError):
    """A resolvent is (numerically) singular.

    Attributes
    ----------
    eigenvalue : complex
        Channel eigenvalue closest to the pole.
    """

    kind = "near-pole"

    def __init__(self, message: str, eigenvalue: complex):
        super().__init__(message)
        self.eigenvalue = eigenvalue

    def record(self) -> dict:
        rec = super().record()
        rec["eigenvalue"] = [float(self.eigenvalue.real), float(self.eigenvalue.imag)]
        return rec


class SingularGaugeError(NumericalError):
    kind = "singular-gauge"


class ConvergenceError(NumericalError):
    kind = "convergence"


class NegativeRateError(NumericalError):
    """A transition rate derived from the tau table is negative."""

    kind = "negative-rate"

    def __init__(self, message: str, entry: tuple, value: float):
        super().__init__(message)
        self.entry = entry
        self.value = value

    def record(self) -> dict:
        rec = super().record()
        rec["entry"] = list(self.entry)
        rec["value"] = self.value
        return rec


class InsufficientStatisticsError(NumericalError):
    kind = "insufficient-statistics"
