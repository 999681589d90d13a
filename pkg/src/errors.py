"""
Exception hierarchy for the Friedrichs weak-coupling laboratory.

Every numerical or assumption failure raised by the library derives from
FriedrichsError so the CLI can map it to exit code 1. Model-file and config
problems raise ModelFileError (exit code 2).
"""


class FriedrichsError(Exception):
    """Base class for all library errors."""


# ============================================================================
# Linear algebra
# ============================================================================

class NotHermitian(FriedrichsError):
    """Matrix failed the Hermitian symmetry check."""


class NoConvergence(FriedrichsError):
    """Eigensolver did not converge."""


class Singular(FriedrichsError):
    """Shifted matrix is numerically singular."""


class OverflowGuard(FriedrichsError):
    """Exponential argument too large to evaluate reliably."""


# ============================================================================
# Model and grids
# ============================================================================

class AssumptionViolated(FriedrichsError):
    """One of the model assumptions A1, A2 or A3 does not hold."""

    def __init__(self, assumption: str, detail: str):
        self.assumption = assumption
        self.detail = detail
        super().__init__(f"{assumption}: {detail}")


class DimensionMismatch(FriedrichsError):
    """Coupling rows disagree with the fiber dimensions of the partition."""


class GridConflict(FriedrichsError):
    """Scaled grid does not fit inside its neighbourhood or the window."""


class GridIncompatible(FriedrichsError):
    """Asymptotic grid is not mapped into itself by the requested scaling."""


class GridMismatch(FriedrichsError):
    """Physical grid and asymptotic system were built from different grids."""


# ============================================================================
# Davies generator
# ============================================================================

class QuadratureFailure(FriedrichsError):
    """Adaptive quadrature could not meet its tolerance."""


class ExtrapolationUnstable(FriedrichsError):
    """Richardson extrapolation over the epsilon sequence is unreliable."""


class RecurrenceGuard(FriedrichsError):
    """Time horizon too long for the grid spacing near the eigenvalue."""


# ============================================================================
# Dilation
# ============================================================================

class ConditionViolated(FriedrichsError):
    """Im Gamma = -pi nu* nu does not hold within tolerance."""


class FeshbachMismatch(FriedrichsError):
    """Direct and Feshbach cutoff resolvents disagree."""


class DefectiveGenerator(UserWarning):
    """Gamma eigenbasis is ill-conditioned; the group falls back to quadrature."""


# ============================================================================
# Input files
# ============================================================================

class ModelFileError(Exception):
    """Model or sweep file could not be parsed or is inconsistent."""
