"""
Models Package
Pydantic domain model exports
"""
from .base import (
    MONEY_QUANTUM,
    DISPLAY_QUANTUM,
    ZERO_MONEY,
    ExactDecimal,
    DomainModel,
    FrozenModel,
    to_money,
    format_money
)
from .usage import UsagePurpose, UsageEvent, CostReport
from .gateway import (
    EndpointKind,
    EndpointBinding,
    ModelDescriptor,
    CompletionRequest,
    CompletionResult,
    PricingEntry,
    PricingFile
)
from .planner import PlannerResponse, ParseFailure, ParseFailureKind
from .cascade import (
    ActionKey,
    RepeatTrigger,
    EscalationReason,
    AttemptOutcome,
    CascadeConfig,
    AttemptRecord,
    TierTransition,
    EscalationTrace,
    CascadeState
)
from .action import (
    ActionName,
    AgentProfiles,
    ActionKind,
    ArgumentSpec,
    ActionSpec,
    Observation,
    ActionInput,
    RequestExpertInput,
    schema_of,
    usage_for
)
from .memory import (
    TRACE_FORMAT_VERSION,
    DISABLED,
    RetrievedContext,
    StepRecord,
    RunHeader,
    RunFooter,
    ResearchLog
)
from .task import (
    MetricDirection,
    ImprovementMode,
    EvaluatorSpec,
    TaskManifest,
    TaskPackage,
    RunConfig,
    RunStatus,
    RunResult,
    BatchReport,
    ReportSummary,
    CascadeSection,
    RunSection,
    ExperimentConfig
)

__all__ = [
    # Base
    'MONEY_QUANTUM',
    'DISPLAY_QUANTUM',
    'ZERO_MONEY',
    'ExactDecimal',
    'DomainModel',
    'FrozenModel',
    'to_money',
    'format_money',

    # Usage
    'UsagePurpose',
    'UsageEvent',
    'CostReport',

    # Gateway
    'EndpointKind',
    'EndpointBinding',
    'ModelDescriptor',
    'CompletionRequest',
    'CompletionResult',
    'PricingEntry',
    'PricingFile',

    # Planner
    'PlannerResponse',
    'ParseFailure',
    'ParseFailureKind',

    # Cascade
    'ActionKey',
    'RepeatTrigger',
    'EscalationReason',
    'AttemptOutcome',
    'CascadeConfig',
    'AttemptRecord',
    'TierTransition',
    'EscalationTrace',
    'CascadeState',

    # Action
    'ActionName',
    'AgentProfiles',
    'ActionKind',
    'ArgumentSpec',
    'ActionSpec',
    'Observation',
    'ActionInput',
    'RequestExpertInput',
    'schema_of',
    'usage_for',

    # Memory
    'TRACE_FORMAT_VERSION',
    'DISABLED',
    'RetrievedContext',
    'StepRecord',
    'RunHeader',
    'RunFooter',
    'ResearchLog',

    # Task
    'MetricDirection',
    'ImprovementMode',
    'EvaluatorSpec',
    'TaskManifest',
    'TaskPackage',
    'RunConfig',
    'RunStatus',
    'RunResult',
    'BatchReport',
    'ReportSummary',
    'CascadeSection',
    'RunSection',
    'ExperimentConfig',
]
