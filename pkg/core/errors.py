"""
PDQLS CORE MODULE: ERRORS
=========================
This file is part of THE VAULT - shared substrate for every pipeline.

Every failure the toolkit reports is a PdqlsError. The exit code travels
with the exception so the CLI can map it without a lookup table:
2 for rejected inputs, 3 for numerical checks that did not hold.
"""

from typing import Any, Dict, Optional


class PdqlsError(Exception):
    """Base error. `details` uses the same payload shape as the run log."""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": "error",
            "error": type(self).__name__,
            "reason": self.message,
            "details": self.details,
        }


class ValidationError(PdqlsError):
    """Input rejected before any numerics ran."""

    exit_code = 2


class NotHermitianError(ValidationError):
    pass


class NormBoundError(ValidationError):
    pass


class SpectrumPromiseError(ValidationError):
    pass


class DiagonalDominanceError(ValidationError):
    pass


class NormalizationRequiredError(ValidationError):
    pass


class PolynomialBoundError(ValidationError):
    pass


class TermSpecError(ValidationError):
    pass


class FactorizationError(ValidationError):
    pass


class InstanceError(ValidationError):
    pass


class SweepConfigError(ValidationError):
    pass


class NumericalCheckError(PdqlsError):
    """A construction ran but its certificate failed."""

    exit_code = 3


class NullPostselectionError(NumericalCheckError):
    pass


class WindowConstructionError(NumericalCheckError):
    pass


class IdentityCheckError(NumericalCheckError):
    pass
