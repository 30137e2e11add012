"""Exception types raised across the package."""


class SecureGSRError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SecureGSRError, ValueError):
    """Malformed numerical input (non-finite entries, bad shapes, asymmetric matrices)."""


class InvalidFunctionError(SecureGSRError, ValueError):
    """An objective returned a non-finite value."""

    def __init__(self, abscissa, value):
        self.abscissa = abscissa
        self.value = value
        super().__init__(f"objective is not finite at x={abscissa!r} (got {value!r})")


class GenerationError(SecureGSRError, RuntimeError):
    """Random graph generation exhausted its attempt budget."""


class CalibrationError(SecureGSRError, ValueError):
    """Detector parameters violate 0 < eta_k < 2 L_kk, or a search interval is empty."""


class DomainError(SecureGSRError, ValueError):
    """Threshold at or below the complete-square offset, so theta is undefined."""


class DegeneratePartitionError(SecureGSRError, ValueError):
    """Mask leaves no honest node, or the honest part of the signal is identically zero."""


class OracleDegenerateError(SecureGSRError, RuntimeError):
    """Pencil minimizer is at infinity (eigenvector has vanishing last coordinate)."""


class ConfigError(SecureGSRError, ValueError):
    """Invalid experiment configuration."""
