"""
Custom Exceptions
Application-specific exception hierarchy
"""
from typing import Optional, Any


class CascadeBenchException(Exception):
    """Base exception for all custom exceptions"""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[dict[str, Any]] = None
    ):
        self.message = message
        self.error_code = error_code or self.__class__.__name__
        self.details = details or {}
        super().__init__(self.message)


class ConfigurationError(CascadeBenchException):
    """Configuration errors (experiment config, pricing file)"""
    pass


class TaskPackageInvalid(ConfigurationError):
    """Task package cannot be loaded or fails validation"""
    pass


class OutputExists(ConfigurationError):
    """Output file exists and overwriting was not requested"""
    pass


# Model gateway

class GatewayError(CascadeBenchException):
    """Model gateway errors"""
    pass


class TransportError(GatewayError):
    """Network failure or timeout talking to an endpoint"""
    pass


class CircuitOpenError(TransportError):
    """Endpoint circuit breaker is open"""
    pass


class RateLimited(GatewayError):
    """Endpoint rate limited the call"""

    def __init__(self, message: str, retry_after: Optional[float] = None, **kwargs: Any):
        super().__init__(message, **kwargs)
        self.retry_after = retry_after
        self.details.setdefault('retry_after', retry_after)


class ScriptExhausted(GatewayError):
    """Scripted backend has no queued response"""
    pass


class CredentialsMissing(GatewayError):
    """Endpoint credentials are not available in the environment"""
    pass


# Cost ledger

class LedgerError(CascadeBenchException):
    """Cost ledger errors"""
    pass


class ModelMismatch(LedgerError):
    """Usage event priced against a different model"""
    pass


class UnknownModel(LedgerError):
    """Usage event for a model absent from the pricing table"""
    pass


# Cascade router

class CascadeError(CascadeBenchException):
    """Cascade router errors"""
    pass


class CascadeExhausted(CascadeError):
    """No permitted tier produced an acceptable response"""

    def __init__(self, message: str, trace: Any = None, annotation: Optional[str] = None, **kwargs: Any):
        super().__init__(message, **kwargs)
        self.trace = trace
        self.annotation = annotation


class LifelinesExhausted(CascadeError):
    """Expert requested with no lifelines left"""
    pass


# Action environment

class ActionError(CascadeBenchException):
    """Action failures the planner gets to see as observations"""
    pass


class PathEscapesSandbox(ActionError):
    """Path resolves outside the workspace root"""
    pass


class NotADirectory(ActionError):
    """Path is not a directory"""
    pass


class FileNotFound(ActionError):
    """File does not exist"""
    pass


class OverwriteRefused(ActionError):
    """Target exists and overwrite was not requested"""
    pass


class NothingToUndo(ActionError):
    """No backup recorded for the file"""
    pass


class InvalidRange(ActionError):
    """Invalid line range"""
    pass


class ScriptTimeout(ActionError):
    """Script exceeded its timeout and was killed"""

    def __init__(self, message: str, partial_output: str = "", **kwargs: Any):
        super().__init__(message, **kwargs)
        self.partial_output = partial_output


class SpawnFailure(ActionError):
    """Subprocess could not be started"""
    pass


class EnvironmentClosed(ActionError):
    """Final Answer was already declared"""
    pass


# Memory log

class MemoryLogError(CascadeBenchException):
    """Research log errors"""
    pass


class IndexGap(MemoryLogError):
    """Step index does not follow the log length"""
    pass


class TraceCorrupt(MemoryLogError):
    """Trace file line cannot be parsed"""

    def __init__(self, message: str, line_no: int, **kwargs: Any):
        super().__init__(message, **kwargs)
        self.line_no = line_no
        self.details.setdefault('line_no', line_no)


# Evaluation

class EvaluationError(CascadeBenchException):
    """Evaluation errors"""
    pass


class BaselineDegenerate(EvaluationError):
    """Baseline score of zero makes relative improvement undefined"""
    pass


class EmptyRunSet(EvaluationError):
    """No runs to aggregate"""
    pass


class EvaluatorFailed(EvaluationError):
    """Evaluator command failed or printed no score"""
    pass
