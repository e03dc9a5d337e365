"""
Memory Models
Research log records and the JSONL trace line shapes
"""
from decimal import Decimal
from typing import Any, Literal, Optional
from pydantic import Field

from .base import DomainModel, FrozenModel, ZERO_MONEY
from .action import Observation
from .cascade import EscalationTrace
from .planner import PlannerResponse
from .usage import UsageEvent

TRACE_FORMAT_VERSION = "1"

DISABLED = "disabled"


class RetrievedContext(FrozenModel):
    """Summary of log entries older than the recency window"""
    summary: str = ''
    source_step_range: Optional[tuple[int, int]] = None
    produced_by: str = DISABLED
    error: Optional[str] = None

    @property
    def is_empty(self) -> bool:
        return not self.summary


class StepRecord(FrozenModel):
    """One executed step; immutable once appended"""
    record_type: Literal['step'] = 'step'
    index: int = Field(ge=0)
    planner_response: PlannerResponse
    escalation_trace: list[EscalationTrace] = Field(default_factory=list)
    action_name: str
    action_input: dict[str, Any] = Field(default_factory=dict)
    observation: Observation
    usage_event_ids: list[str] = Field(default_factory=list)
    usage_events: list[UsageEvent] = Field(default_factory=list)
    retrieved_context: Optional[RetrievedContext] = None


class RunHeader(FrozenModel):
    """First trace line: run identity and effective configuration"""
    record_type: Literal['header'] = 'header'
    version: str = TRACE_FORMAT_VERSION
    run_id: str
    task_id: str
    config_hash: str
    prompt_template_version: str
    started_at: str
    run_config: dict[str, Any]
    task: dict[str, Any] = Field(default_factory=dict, description='Baseline, direction, improvement mode')


class RunFooter(FrozenModel):
    """Last trace line: outcome and stored totals"""
    record_type: Literal['footer'] = 'footer'
    status: str
    step_count: int = Field(ge=0)
    final_score: Optional[Decimal] = None
    improvement_fraction: Optional[Decimal] = None
    success: bool = False
    lifelines_used: int = Field(default=0, ge=0)
    unattributed_usage_events: list[UsageEvent] = Field(
        default_factory=list,
        description='Usage not tied to a recorded step (attempts of the step that failed)'
    )
    failed_step_trace: Optional[EscalationTrace] = None
    total_cost: Decimal = ZERO_MONEY
    annotation: Optional[str] = None
    finished_at: str


class ResearchLog(DomainModel):
    """Append-only per-run history"""
    header: RunHeader
    records: list[StepRecord] = Field(default_factory=list)
    footer: Optional[RunFooter] = None

    def __len__(self) -> int:
        return len(self.records)

    def usage_events(self) -> list[UsageEvent]:
        """Every usage event in the log, step events first"""
        events = [e for r in self.records for e in r.usage_events]
        if self.footer:
            events.extend(self.footer.unattributed_usage_events)
        return events
