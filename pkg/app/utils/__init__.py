"""
Utils Package
Shared utilities export
"""
from .logger import get_logger, setup_logging, LoggerMixin
from .circuit_breaker import CircuitBreaker, CircuitState
from .exceptions import (
    CascadeBenchException,
    ConfigurationError,
    TaskPackageInvalid,
    OutputExists,
    GatewayError,
    TransportError,
    CircuitOpenError,
    RateLimited,
    ScriptExhausted,
    CredentialsMissing,
    LedgerError,
    ModelMismatch,
    UnknownModel,
    CascadeError,
    CascadeExhausted,
    LifelinesExhausted,
    ActionError,
    PathEscapesSandbox,
    NotADirectory,
    FileNotFound,
    OverwriteRefused,
    NothingToUndo,
    InvalidRange,
    ScriptTimeout,
    SpawnFailure,
    EnvironmentClosed,
    MemoryLogError,
    IndexGap,
    TraceCorrupt,
    EvaluationError,
    BaselineDegenerate,
    EmptyRunSet,
    EvaluatorFailed,
)

__all__ = [
    # Logging
    'get_logger',
    'setup_logging',
    'LoggerMixin',

    # Circuit Breaker
    'CircuitBreaker',
    'CircuitState',

    # Exceptions
    'CascadeBenchException',
    'ConfigurationError',
    'TaskPackageInvalid',
    'OutputExists',
    'GatewayError',
    'TransportError',
    'CircuitOpenError',
    'RateLimited',
    'ScriptExhausted',
    'CredentialsMissing',
    'LedgerError',
    'ModelMismatch',
    'UnknownModel',
    'CascadeError',
    'CascadeExhausted',
    'LifelinesExhausted',
    'ActionError',
    'PathEscapesSandbox',
    'NotADirectory',
    'FileNotFound',
    'OverwriteRefused',
    'NothingToUndo',
    'InvalidRange',
    'ScriptTimeout',
    'SpawnFailure',
    'EnvironmentClosed',
    'MemoryLogError',
    'IndexGap',
    'TraceCorrupt',
    'EvaluationError',
    'BaselineDegenerate',
    'EmptyRunSet',
    'EvaluatorFailed',
]
