"""Exception types shared across the package."""


class SparsyncError(Exception):
    """Base class for all package errors."""


class RowNotStochastic(SparsyncError):
    """A channel row does not sum to one (beyond tolerance) or has a negative entry."""


class UnreachableOutput(SparsyncError):
    """Some output symbol has zero probability under every input."""


class BadStarIndex(SparsyncError):
    """Idle-symbol index outside the input alphabet."""


class SupportViolation(SparsyncError):
    """support(P) is not contained in support(Q) where the operation requires it."""


class LengthMismatch(SparsyncError):
    """Paired sequences have different lengths."""


class DomainError(SparsyncError):
    """Argument outside the mathematical domain of the function."""


class Infeasible(SparsyncError):
    """Constrained problem has no feasible point (asynchronism level too high)."""


class NonConvergence(SparsyncError):
    """Iterative solver exhausted its iteration budget."""


class RangeViolation(SparsyncError):
    """A scheme constant violates its admissible open interval."""


class EpsilonTooSmall(SparsyncError):
    """Finite-length code-size formula pushed the Gaussian-quantile argument out of (0,1)."""


class WindowCapExceeded(SparsyncError):
    """Requested asynchronism window exceeds the configured cap."""


class OutOfMemory(SparsyncError):
    """Materializing this codebook would exceed the configured size cap."""


class DegenerateDenominator(SparsyncError):
    """An analytic bound is vacuous because its denominator is non-positive."""


class NoFeasibleM(SparsyncError):
    """Even the smallest codebook fails the target error probability."""


class FitDiverged(SparsyncError):
    """Nonlinear fit failed to converge."""


class ConfigError(SparsyncError):
    """Malformed configuration file or inconsistent option set."""


class SchemaMismatch(SparsyncError):
    """Input CSV header does not match the documented schema."""
