"""
Custom exceptions for the application
"""

class BaseAppException(Exception):
    """Base application exception"""
    def __init__(self, message: str, details: str = None):
        self.message = message
        self.details = details
        super().__init__(self.message)


class NotFoundError(BaseAppException):
    """Raised when a file or resource is not found"""
    pass


class ValidationError(BaseAppException):
    """Raised when validation fails"""
    def __init__(self, message: str, details: str = None, error_code: str = None):
        super().__init__(message, details)
        self.error_code = error_code


class ProcessingError(BaseAppException):
    """Raised when processing operations fail"""
    pass


class OffsetInsufficientError(ValidationError):
    """Raised when offsetting leaves a negative feature (data outside the assumed range)"""
    def __init__(self, message: str, details: str = None):
        super().__init__(message, details, error_code="offset_insufficient")


class DimensionMismatchError(ValidationError):
    """Raised when matrix, vector or frame dimensions disagree"""
    def __init__(self, message: str, details: str = None):
        super().__init__(message, details, error_code="dimension_mismatch")


class GapTooLongError(ValidationError):
    """Raised when a run of missing samples is longer than the interpolable maximum"""
    def __init__(self, message: str, details: str = None):
        super().__init__(message, details, error_code="gap_too_long")


class DegeneratePalmPoseError(ValidationError):
    """Raised when the palm pose cannot define a reference frame"""
    def __init__(self, message: str, details: str = None):
        super().__init__(message, details, error_code="degenerate_palm_pose")


class InvalidCutoffError(ValidationError):
    """Raised when a low-pass cutoff is not below the Nyquist frequency"""
    def __init__(self, message: str, details: str = None):
        super().__init__(message, details, error_code="invalid_cutoff")


class RankTooLargeError(ValidationError):
    """Raised when the number of primitives is not smaller than the number of columns"""
    def __init__(self, message: str, details: str = None):
        super().__init__(message, details, error_code="rank_too_large")


class NonNegativityViolatedError(ValidationError):
    """Raised when a matrix that must be non-negative has negative entries"""
    def __init__(self, message: str, details: str = None):
        super().__init__(message, details, error_code="non_negativity_violated")


class ScriptInfeasibleError(ValidationError):
    """Raised when a manipulation script leaves fewer than two fingers on the object"""
    def __init__(self, message: str, details: str = None):
        super().__init__(message, details, error_code="script_infeasible")


class InfeasibleError(ProcessingError):
    """Raised when velocity bounds keep the endpoints from being matched.

    The best feasible result is attached so callers can still inspect or save it.
    """
    def __init__(self, message: str, details: str = None, result=None):
        super().__init__(message, details)
        self.result = result


class PipelineStageError(ProcessingError):
    """Raised when a pipeline stage fails; wraps the original error"""
    def __init__(self, stage: str, cause: Exception):
        message = getattr(cause, "message", None) or str(cause)
        super().__init__(f"[{stage}] {message}", getattr(cause, "details", None))
        self.stage = stage
        self.cause = cause
