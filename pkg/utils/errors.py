"""
Error types for the resonator analysis toolkit
Every error carries a stable error code and the CLI exit code it maps to
"""

from typing import Any, Dict, Optional


class ResonatorAnalysisError(Exception):
    """Base class for all toolkit errors"""

    error_code = "ANALYSIS_ERROR"
    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Convert error to a machine-readable dictionary"""
        return {
            'error': self.message,
            'error_code': self.error_code,
            'exit_code': self.exit_code,
            'details': self.details,
        }


class UsageError(ResonatorAnalysisError):
    error_code = "USAGE_ERROR"
    exit_code = 2


# Data errors: the input cannot be analysed as given

class DataError(ResonatorAnalysisError):
    error_code = "DATA_ERROR"
    exit_code = 3


class TraceValidationError(DataError):
    error_code = "INVALID_TRACE"


class EmptyWindowError(DataError):
    error_code = "EMPTY_WINDOW"


class SchemaError(DataError):
    """Malformed trace file; reports the offending line and column"""

    error_code = "SCHEMA_ERROR"

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message, {'line': line, 'column': column})
        self.line = line
        self.column = column


class NonMonotoneFrequencyError(SchemaError):
    error_code = "NON_MONOTONE_FREQUENCY"


class NonFiniteValueError(SchemaError):
    error_code = "NON_FINITE_VALUE"


class DomainError(DataError):
    error_code = "DOMAIN_ERROR"


class PreconditionError(DataError):
    error_code = "PRECONDITION_FAILED"


class InsufficientSamplesError(DataError):
    error_code = "INSUFFICIENT_SAMPLES"


class InsufficientGridError(DataError):
    error_code = "INSUFFICIENT_GRID"


class NoDipFoundError(DataError):
    error_code = "NO_DIP_FOUND"


class MixedResonatorError(DataError):
    error_code = "MIXED_RESONATOR"


class DuplicateCellError(DataError):
    error_code = "DUPLICATE_CELL"


# Numerical errors: the input was fine but the computation failed

class NumericalError(ResonatorAnalysisError):
    error_code = "NUMERICAL_FAILURE"
    exit_code = 4


class NonConvergenceError(NumericalError):
    error_code = "NON_CONVERGENCE"


class SingularMatrixError(NumericalError):
    error_code = "SINGULAR_MATRIX"


class PathologicalUnwrapError(NumericalError):
    error_code = "PATHOLOGICAL_UNWRAP"
