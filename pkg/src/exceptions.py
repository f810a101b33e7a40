"""Exceptions and warnings raised by the cepstral CCA pipeline.

Input problems subclass ValueError so callers that only know about
ValueError (as the CLI does) still catch them. Numerical failures subclass
RuntimeError.
"""


class CepstralCcaError(Exception):
    """Base class for all pipeline errors."""


class InputError(CepstralCcaError, ValueError):
    """Invalid data or arguments supplied by the caller."""


class FormatError(InputError):
    """A CSV file does not follow the expected layout."""


class JoinError(InputError):
    """Subject identifiers of series and outcomes do not match one-to-one."""


class DegenerateColumnError(InputError):
    """An outcome column has zero sample variance."""

    def __init__(self, variable: str):
        self.variable = variable
        super().__init__(
            f"Outcome '{variable}' has zero sample variance and cannot be standardized"
        )


class OrderError(InputError):
    """Truncation order K outside 1..floor((T-1)/2)."""


class NumericalError(CepstralCcaError, RuntimeError):
    """A numerical routine could not produce a valid result."""


class DesignRankError(NumericalError):
    """Cosine design or its information matrix is rank deficient."""


class MatrixError(NumericalError):
    """A matrix does not have the structure an operation requires."""


class SingularOutcomeError(NumericalError):
    """Outcome covariance is numerically singular."""


class DegenerateCcaError(NumericalError):
    """No canonical pair can be formed (rank of the cepstral covariance is zero)."""


class NoValidOrderError(NumericalError):
    """Every candidate order K had at least one non-converged subject fit."""


class ReplicateFailureError(NumericalError):
    """Too many simulation replicates failed."""


class NumericalWarning(RuntimeWarning):
    """Exponent clamping or eigenvalue clipping occurred."""


class ReferenceCheckError(NumericalError):
    """Simulated errors deviate from the tabulated reference values."""
