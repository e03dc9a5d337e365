"""
Memory Log Service
Append-only research log, the recency window and summarization-based retrieval
"""
from pathlib import Path
from typing import Optional, Sequence, Union

from app.models import (
    DISABLED,
    CompletionRequest,
    ModelDescriptor,
    ResearchLog,
    RetrievedContext,
    RunFooter,
    RunHeader,
    StepRecord,
    UsagePurpose
)
from app.repositories.trace import TraceRepository
from app.services.cost_ledger import CostLedger
from app.services.gateway_service import ModelGateway
from app.services.response_grammar import render_step_summary
from app.utils import CredentialsMissing, GatewayError, IndexGap, LoggerMixin, ScriptExhausted

RETRIEVAL_PROMPT_HEADER = "Here are earlier steps from the research log:\n"


def recent_window(log: Union[ResearchLog, Sequence[StepRecord]], k: int) -> list[StepRecord]:
    """Last min(k, len) records, oldest first"""
    records = log.records if isinstance(log, ResearchLog) else list(log)
    if k <= 0:
        return []
    return list(records[-k:])


def build_retrieval_prompt(records: Sequence[StepRecord], current_plan: str) -> str:
    """Summarization request over older steps, keyed on the current plan"""
    history = '\n'.join(render_step_summary(r) for r in records)
    plan = current_plan.strip() or "(no plan yet)"
    return (
        f"{RETRIEVAL_PROMPT_HEADER}"
        f"{history}\n"
        "The current research plan and status is:\n"
        f"{plan}\n\n"
        "Summarize the information from these steps that is relevant to the current plan. "
        "Keep confirmed results, errors encountered and files changed. Be concise.\n"
    )


class ResearchLogWriter(LoggerMixin):
    """
    Single writer of one run's research log

    Each record reaches the trace file before append_step() returns.
    """

    def __init__(self, repository: TraceRepository, force: bool = False):
        self.repository = repository
        self.force = force
        self.path: Optional[Path] = None

    def open(self, header: RunHeader) -> ResearchLog:
        """Create the trace file and an empty log"""
        self.path = self.repository.create(header, force=self.force)
        return ResearchLog(header=header)

    def append_step(self, log: ResearchLog, record: StepRecord) -> ResearchLog:
        """
        Append a step record durably

        Raises:
            IndexGap: record.index != len(log)
        """
        if record.index != len(log):
            raise IndexGap(
                f"Step index {record.index} does not follow log length {len(log)}",
                details={"index": record.index, "expected": len(log)}
            )
        if self.path is not None:
            self.repository.append(self.path, record)
        log.records.append(record)
        return log

    def close(self, log: ResearchLog, footer: RunFooter) -> ResearchLog:
        if self.path is not None:
            self.repository.append(self.path, footer)
        log.footer = footer
        return log


class RetrievalService(LoggerMixin):
    """
    Long-term memory lookup

    Steps older than the recency window are summarized by the worker
    model with respect to the current plan. Steps inside the window are
    never sent; they already appear verbatim in the planner prompt.
    """

    def __init__(
        self,
        gateway: ModelGateway,
        ledger: CostLedger,
        worker_model: ModelDescriptor,
        temperature: float = 0.01,
        short_term_k: int = 3
    ):
        self.gateway = gateway
        self.ledger = ledger
        self.worker_model = worker_model
        self.temperature = temperature
        self.short_term_k = short_term_k

    async def retrieve(
        self,
        log: Union[ResearchLog, Sequence[StepRecord]],
        current_plan: str,
        enabled: bool
    ) -> RetrievedContext:
        """
        Summarize log entries older than the recency window

        Args:
            log: Research log so far
            current_plan: Latest Research Plan and Status, used as the query
            enabled: False in no-retrieval runs

        Returns:
            RetrievedContext: Empty without a model call when disabled or when
                nothing is older than the window; empty with error set when
                the worker call failed
        """
        if not enabled:
            return RetrievedContext(produced_by=DISABLED)

        records = log.records if isinstance(log, ResearchLog) else list(log)
        older = records[:max(len(records) - self.short_term_k, 0)]
        if not older:
            return RetrievedContext(produced_by=self.worker_model.id)

        source_range = (older[0].index, older[-1].index)
        try:
            result = await self.gateway.complete(
                self.worker_model,
                CompletionRequest(
                    profile='',
                    prompt=build_retrieval_prompt(older, current_plan),
                    temperature=self.temperature,
                    purpose=UsagePurpose.RETRIEVAL
                ),
                ledger=self.ledger
            )
        except (ScriptExhausted, CredentialsMissing):
            raise
        except GatewayError as e:
            self.logger.warning("retrieval_failed", error=e.message, error_code=e.error_code)
            return RetrievedContext(
                source_step_range=source_range,
                produced_by=self.worker_model.id,
                error=e.message
            )

        self.logger.debug("retrieval_completed", source_from=source_range[0], source_to=source_range[1])
        return RetrievedContext(
            summary=result.text.strip(),
            source_step_range=source_range,
            produced_by=self.worker_model.id
        )
