"""
Custom exceptions for the granular-growth toolkit.
"""

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_PARAMETER_ERROR = 1
EXIT_IO_ERROR = 2


class GrowthToolkitException(Exception):
    """Base exception for all toolkit-specific errors."""

    def __init__(
        self,
        message: str,
        error_code: str = "GENERIC_ERROR",
        exit_code: int = EXIT_PARAMETER_ERROR,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.error_code = error_code
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class ParameterException(GrowthToolkitException):
    """Exception raised for invalid parameters."""

    def __init__(self, message: str, parameter: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="PARAMETER_ERROR",
            details={"parameter": parameter, **(details or {})}
        )


class ShapeException(GrowthToolkitException):
    """Exception raised when sequence lengths do not match."""

    def __init__(self, message: str, expected: Optional[int] = None, actual: Optional[int] = None):
        super().__init__(
            message=message,
            error_code="SHAPE_ERROR",
            details={"expected": expected, "actual": actual}
        )


class DomainException(GrowthToolkitException):
    """Exception raised for values outside a function's domain."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, error_code="DOMAIN_ERROR", details=details)


class InsufficientDataException(GrowthToolkitException):
    """Exception raised when an estimator gets too few observations."""

    def __init__(self, message: str, required: Optional[int] = None, available: Optional[int] = None):
        super().__init__(
            message=message,
            error_code="INSUFFICIENT_DATA",
            details={"required": required, "available": available}
        )


class DegenerateDataException(GrowthToolkitException):
    """Exception raised when the data has no spread to estimate from."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, error_code="DEGENERATE_DATA", details=details)


class NumericException(GrowthToolkitException):
    """Exception raised when a numerical routine fails to converge."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, error_code="NUMERIC_ERROR", details=diagnostics)


class RegimeException(GrowthToolkitException):
    """Exception raised when a scaling formula is evaluated outside its validity regime."""

    def __init__(self, formula: str, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"{formula}: {message}",
            error_code="REGIME_ERROR",
            details={"formula": formula, **(details or {})}
        )


class ConfigurationException(GrowthToolkitException):
    """Exception raised for invalid settings or experiment configuration."""

    def __init__(self, message: str, setting: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="CONFIGURATION_ERROR",
            details={"setting": setting, **(details or {})}
        )


class OutputException(GrowthToolkitException):
    """Exception raised for file-system errors (unreadable config, unwritable output)."""

    def __init__(self, message: str, path: Optional[str] = None, operation: Optional[str] = None):
        super().__init__(
            message=message,
            error_code="IO_ERROR",
            exit_code=EXIT_IO_ERROR,
            details={"path": path, "operation": operation}
        )
