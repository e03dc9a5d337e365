"""
Report Service
Rebuilds cost and success reports from raw trace records
"""
from collections import defaultdict
from decimal import Decimal
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from app.models import (
    EscalationTrace,
    ImprovementMode,
    MetricDirection,
    ReportSummary,
    ResearchLog,
    RunConfig,
    RunResult,
    RunStatus
)
from app.repositories.trace import TraceRepository
from app.services.cost_ledger import aggregate
from app.services.orchestrator_service import escalation_counts, evaluate_success, summarize_batch
from app.utils import EmptyRunSet, EvaluationError, LoggerMixin, TraceCorrupt

INCOMPLETE_ANNOTATION = "incomplete_trace"


def lifelines_from_traces(traces: list[EscalationTrace]) -> int:
    """Count expert-tier calls recorded in escalation traces"""
    return sum(1 for trace in traces for attempt in trace.attempts if attempt.consumed_lifeline)


class ReportService(LoggerMixin):
    """
    Summaries over a directory of traces

    Totals, success flags, escalation counts and lifeline usage are derived
    from usage events and step records; stored footer totals are only
    compared against, never reused.
    """

    def __init__(self, trace_repository: Optional[TraceRepository] = None):
        self.trace_repository = trace_repository

    def recompute_run(self, log: ResearchLog, trace_path: Optional[Path] = None) -> RunResult:
        """
        Rebuild one run's result from its log

        A trace without a footer counts as a failed run.

        Raises:
            TraceCorrupt: Header config cannot be read back
        """
        header = log.header
        try:
            config = RunConfig.model_validate(header.run_config)
        except ValidationError as e:
            raise TraceCorrupt(f"{header.run_id}: header run_config is invalid", line_no=1) from e

        cost_report = aggregate(log.usage_events(), config.models)

        traces = [t for record in log.records for t in record.escalation_trace]
        footer = log.footer
        if footer is not None and footer.failed_step_trace is not None:
            traces.append(footer.failed_step_trace)

        status = RunStatus.ENV_FATAL
        annotation: Optional[str] = INCOMPLETE_ANNOTATION
        final_score: Optional[Decimal] = None
        improvement: Optional[Decimal] = None
        success = False

        if footer is not None:
            status = RunStatus(footer.status)
            annotation = footer.annotation
            final_score = footer.final_score
            if status.evaluates and final_score is not None:
                try:
                    improvement, success = evaluate_success(
                        final_score,
                        Decimal(header.task['baseline_score']),
                        MetricDirection(header.task.get('metric_direction', MetricDirection.HIGHER_IS_BETTER.value)),
                        ImprovementMode(header.task.get('improvement_mode', ImprovementMode.RELATIVE.value))
                    )
                except (EvaluationError, KeyError) as e:
                    self.logger.warning("report_success_unavailable", run_id=header.run_id, error=str(e))

        return RunResult(
            run_id=header.run_id,
            task_id=header.task_id,
            status=status,
            final_score=final_score,
            improvement_fraction=improvement,
            success=success,
            step_count=len(log),
            cost_report=cost_report,
            trace_path=trace_path,
            lifelines_used=lifelines_from_traces(traces),
            escalation_counts=escalation_counts(traces),
            annotation=annotation
        )

    def summarize(self, trace_dir: Path) -> ReportSummary:
        """
        Per-task batch reports for every trace in a directory

        Raises:
            EmptyRunSet: No traces found
            TraceCorrupt: A trace cannot be parsed
        """
        repository = TraceRepository(trace_dir) if trace_dir else self.trace_repository
        paths = repository.list_traces()
        if not paths:
            raise EmptyRunSet(f"No traces found in {repository.root}")

        by_task: dict[str, list[RunResult]] = defaultdict(list)
        incomplete: list[str] = []
        mismatches: list[str] = []

        for path in paths:
            log = repository.load(path)
            result = self.recompute_run(log, path)
            by_task[result.task_id].append(result)

            if log.footer is None:
                incomplete.append(result.run_id)
            elif log.footer.total_cost != result.cost_report.total:
                mismatches.append(result.run_id)
                self.logger.warning(
                    "stored_total_mismatch",
                    run_id=result.run_id,
                    stored=str(log.footer.total_cost),
                    recomputed=str(result.cost_report.total)
                )

        batches = [summarize_batch(task_id, runs) for task_id, runs in sorted(by_task.items())]
        return ReportSummary(
            batches=batches,
            trace_count=len(paths),
            incomplete_runs=incomplete,
            cost_mismatches=mismatches
        )
