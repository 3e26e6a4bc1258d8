"""Failure taxonomy shared by all modules.

Input problems raise ``ValueError`` subclasses; mathematical refusals raise
``NumericalRefusal`` subclasses so callers (and the CLI exit codes) can tell
them apart from bugs.
"""

from __future__ import annotations


class HorizonError(ValueError):
    """A requested time lies outside the noise path horizon or off the grid."""


class NumericalRefusal(RuntimeError):
    """A hypothesis needed by a construction fails; carries a short reason code."""

    reason = "numerical_refusal"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def as_dict(self) -> dict:
        return {"reason": self.reason, "message": str(self), **self.details}


class SingularOperatorError(NumericalRefusal):
    reason = "singular_operator"


class StepSizeError(NumericalRefusal):
    reason = "step_size"


class ContractionRefusal(NumericalRefusal):
    reason = "non_contractive"


class NonDissipativeRefusal(NumericalRefusal):
    reason = "non_dissipative"


class SpectralGapError(NumericalRefusal):
    reason = "no_spectral_gap"


class ChartFailure(NumericalRefusal):
    reason = "chart_failure"


class DivergentIntegral(NumericalRefusal):
    reason = "divergent"


class NonStationaryError(NumericalRefusal):
    reason = "non_stationary"


class EnsembleTooSmall(ValueError):
    """A statistical report was requested on too few independent samples."""
