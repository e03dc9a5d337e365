"""
Run Orchestrator Service
Plan, dispatch, observe and log until the task ends, then score the workspace
"""
import asyncio
import hashlib
from collections import Counter, defaultdict
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import orjson
from pydantic import ValidationError

from app.models import (
    ZERO_MONEY,
    BatchReport,
    CascadeState,
    EscalationTrace,
    ImprovementMode,
    MetricDirection,
    ParseFailure,
    ParseFailureKind,
    PlannerResponse,
    RequestExpertInput,
    RetrievedContext,
    RunConfig,
    RunFooter,
    RunHeader,
    RunResult,
    RunStatus,
    StepRecord,
    TaskPackage,
    to_money
)
from app.repositories.task import TaskRepository, fill_placeholders
from app.repositories.trace import TraceRepository
from app.services.cascade_service import (
    EXPERT_ACTION,
    LIFELINE_CAP_ANNOTATION,
    CascadeRouter,
    Grammar,
    action_key,
    available_planner_actions
)
from app.services.cost_ledger import CostLedger, aggregate
from app.services.environment_service import ERROR_MARKER, ActionEnvironment, Workspace, kill_process_group
from app.services.gateway_service import ModelGateway
from app.services.memory_service import ResearchLogWriter, RetrievalService, recent_window
from app.services.response_grammar import (
    PROMPT_TEMPLATE_VERSION,
    parse_planner_response,
    render_planner_prompt
)
from app.utils import (
    BaselineDegenerate,
    CascadeBenchException,
    CascadeExhausted,
    EmptyRunSet,
    EvaluationError,
    EvaluatorFailed,
    LifelinesExhausted,
    LoggerMixin,
    TaskPackageInvalid
)

# "more than 10% improvement"; strict
SUCCESS_THRESHOLD = Decimal('0.10')

RATE_QUANTUM = Decimal('0.01')

BATCH_NOTES = [
    "Retrieval calls are counted in every cost total.",
    "Costs use the configured per-token prices only; no token-factor approximation "
    "is applied for discontinued models.",
]

GatewayFactory = Callable[[RunConfig], ModelGateway]


def _as_decimal(value: Union[Decimal, int, float, str]) -> Decimal:
    if isinstance(value, Decimal):
        return value
    return Decimal(str(value))


def evaluate_success(
    final_score: Union[Decimal, float, str],
    baseline: Union[Decimal, float, str],
    direction: MetricDirection = MetricDirection.HIGHER_IS_BETTER,
    mode: ImprovementMode = ImprovementMode.RELATIVE
) -> tuple[Decimal, bool]:
    """
    Improvement over the baseline and whether it counts as success

    Args:
        final_score: Evaluator score of the final workspace
        baseline: Average score of the starter code
        direction: Whether higher or lower scores are better
        mode: relative ((final - baseline) / |baseline|) or absolute (final - baseline)

    Returns:
        tuple: (improvement, improvement > 0.10)

    Raises:
        BaselineDegenerate: Relative mode with a zero baseline
    """
    final_score = _as_decimal(final_score)
    baseline = _as_decimal(baseline)

    delta = final_score - baseline
    if direction == MetricDirection.LOWER_IS_BETTER:
        delta = -delta

    if mode == ImprovementMode.RELATIVE:
        if baseline == 0:
            raise BaselineDegenerate("Relative improvement is undefined for a zero baseline")
        improvement = delta / abs(baseline)
    else:
        improvement = delta

    return improvement, improvement > SUCCESS_THRESHOLD


def success_rate(results: Sequence[RunResult]) -> Decimal:
    """
    Percentage of successful runs, e.g. Decimal('50.00')

    Raises:
        EmptyRunSet: No results
    """
    if not results:
        raise EmptyRunSet("Success rate needs at least one run")
    successes = sum(1 for r in results if r.success)
    return (Decimal(100 * successes) / Decimal(len(results))).quantize(RATE_QUANTUM)


def config_hash(config: RunConfig) -> str:
    """Short stable digest of the effective configuration"""
    payload = orjson.dumps(config.dump(), option=orjson.OPT_SORT_KEYS)
    return hashlib.sha256(payload).hexdigest()[:16]


def escalation_counts(traces: Sequence[EscalationTrace]) -> dict[str, int]:
    """Tier transitions by reason"""
    counts = Counter(t.reason.value for trace in traces for t in trace.transitions)
    return dict(sorted(counts.items()))


class RunOrchestrator(LoggerMixin):
    """
    Runs tasks end to end

    Each run gets its own workspace copy, gateway, ledger, log and
    cascade state; only the task package and config are shared.
    """

    def __init__(
        self,
        trace_repository: TraceRepository,
        work_root: Path,
        gateway_factory: Optional[GatewayFactory] = None,
        script_dir: Optional[Path] = None,
        clock: Optional[Callable[[], datetime]] = None,
        force: bool = False
    ):
        """
        Initialize orchestrator

        Args:
            trace_repository: Where run traces are written
            work_root: Parent directory of per-run workspaces
            gateway_factory: Builds a fresh gateway per run; defaults to
                endpoint bindings of the configured models
            script_dir: Directory scripted backends resolve script files against
            clock: Timestamp source when the config has no frozen clock
            force: Overwrite existing traces and workspaces
        """
        self.trace_repository = trace_repository
        self.task_repository = TaskRepository(work_root)
        self.work_root = Path(work_root)
        self.gateway_factory = gateway_factory or (
            lambda config: ModelGateway.from_descriptors(config.models.values(), base_dir=script_dir)
        )
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.force = force

    def _now(self, config: RunConfig) -> str:
        if config.frozen_clock is not None:
            return config.frozen_clock.isoformat()
        return self.clock().isoformat()

    @staticmethod
    def _context_block(context: RetrievedContext, config: RunConfig) -> Optional[str]:
        if not config.retrieval_enabled:
            return None
        if context.error:
            return f"{ERROR_MARKER} retrieval failed: {context.error}"
        return context.summary

    @staticmethod
    def _grammar(env: ActionEnvironment, allowed: Sequence[str]) -> Grammar:
        """Parser plus input-schema check for the step's allowed actions"""
        allowed = list(allowed)

        def grammar(text: str) -> Union[PlannerResponse, ParseFailure]:
            parsed = parse_planner_response(text, allowed)
            if isinstance(parsed, ParseFailure):
                return parsed
            if parsed.action_name == EXPERT_ACTION.name:
                try:
                    RequestExpertInput.model_validate(parsed.action_input)
                except ValidationError as e:
                    return ParseFailure(
                        kind=ParseFailureKind.MALFORMED_ACTION_INPUT,
                        detail=f"invalid input for '{parsed.action_name}': {e.error_count()} error(s)",
                        offending_text=str(parsed.action_input)[:2000]
                    )
                return parsed
            return env.validate_input(parsed.action_name, parsed.action_input) or parsed

        return grammar

    async def run_evaluator(self, task: TaskPackage, workspace: Path) -> Decimal:
        """
        Score a workspace with the task's evaluator

        The score is the last non-empty stdout line, parsed as a decimal.

        Raises:
            EvaluatorFailed: Spawn failure, timeout, nonzero exit or no score
        """
        argv = fill_placeholders(task.evaluator.command, task.root_dir, workspace)
        try:
            process = await asyncio.create_subprocess_exec(
                *argv,
                cwd=workspace,
                stdin=asyncio.subprocess.DEVNULL,
                stdout=asyncio.subprocess.PIPE,
                stderr=asyncio.subprocess.PIPE,
                start_new_session=True
            )
        except OSError as e:
            raise EvaluatorFailed(f"Cannot start evaluator: {e}") from e

        try:
            stdout, stderr = await asyncio.wait_for(process.communicate(), timeout=task.evaluator.timeout_s)
        except asyncio.TimeoutError:
            kill_process_group(process)
            await process.wait()
            raise EvaluatorFailed(f"Evaluator exceeded {task.evaluator.timeout_s}s")

        if process.returncode != 0:
            raise EvaluatorFailed(
                f"Evaluator exited with status {process.returncode}",
                details={"stderr": stderr.decode('utf-8', errors='replace')[-2000:]}
            )

        lines = [line.strip() for line in stdout.decode('utf-8', errors='replace').splitlines() if line.strip()]
        if not lines:
            raise EvaluatorFailed("Evaluator printed no score")
        try:
            score = Decimal(lines[-1])
        except InvalidOperation:
            raise EvaluatorFailed(f"Evaluator score is not a number: {lines[-1]!r}") from None
        if not score.is_finite():
            raise EvaluatorFailed(f"Evaluator score is not finite: {lines[-1]!r}")
        return score

    async def run_task(self, task: TaskPackage, config: RunConfig, run_no: int = 1) -> RunResult:
        """
        Execute one run of a task

        In-run failures end the run with a status instead of raising.

        Args:
            task: Loaded task package
            config: Effective run configuration
            run_no: Position in a batch, part of the run id

        Returns:
            RunResult: Outcome, score, cost and trace location

        Raises:
            TaskPackageInvalid: Seed workspace cannot be copied
            OutputExists: Trace or workspace exists and force is not set
        """
        run_id = f"{task.id}-{config.seed_label}-r{run_no:03d}"
        gateway = self.gateway_factory(config)
        workspace_dir = self.work_root / run_id
        try:
            self.task_repository.materialize_workspace(task, workspace_dir, force=self.force)
        except OSError as e:
            raise TaskPackageInvalid(
                f"Cannot copy seed workspace of '{task.id}': {e}",
                details={"diagnostics": [f"workspace: {e}"]}
            ) from e

        header = RunHeader(
            run_id=run_id,
            task_id=task.id,
            config_hash=config_hash(config),
            prompt_template_version=PROMPT_TEMPLATE_VERSION,
            started_at=self._now(config),
            run_config=config.dump(),
            task={
                "baseline_score": str(task.baseline_score),
                "metric_direction": task.metric_direction.value,
                "improvement_mode": task.improvement_mode.value
            }
        )
        writer = ResearchLogWriter(self.trace_repository, force=self.force)
        log = writer.open(header)

        ledger = CostLedger(run_id)
        state = CascadeState()
        router = CascadeRouter(gateway, ledger, config.profiles, config.planning_temperature)
        retrieval = RetrievalService(
            gateway, ledger, config.worker_model, config.worker_temperature, config.short_term_k
        )
        env = ActionEnvironment(
            Workspace(workspace_dir),
            gateway,
            ledger,
            config.worker_model,
            profiles=config.profiles,
            interpreter_command=task.interpreter_command,
            execute_timeout_s=task.execute_timeout_s,
            worker_temperature=config.worker_temperature,
            log_source=lambda: log.records
        )

        self.logger.info("run_started", run_id=run_id, task_id=task.id, max_actions=config.max_actions)

        status = RunStatus.MAX_ACTIONS_REACHED
        annotation: Optional[str] = None
        failed_trace: Optional[EscalationTrace] = None

        try:
            for index in range(config.max_actions):
                ledger.begin_step(index)
                mark = ledger.mark()

                current_plan = log.records[-1].planner_response.plan_and_status if log.records else ''
                context = await retrieval.retrieve(log, current_plan, config.retrieval_enabled)
                context_block = self._context_block(context, config)
                recent = recent_window(log, config.short_term_k)

                actions = available_planner_actions(state, config.cascade, env.specs())
                prompt = render_planner_prompt(task.description_text, actions, recent, context_block)
                response, trace = await router.plan_next(
                    prompt, state, config.cascade, self._grammar(env, [a.name for a in actions])
                )
                traces = [trace]

                if response.action_name == EXPERT_ACTION.name:
                    base = [a for a in actions if a.name != EXPERT_ACTION.name]
                    expert_prompt = render_planner_prompt(task.description_text, base, recent, context_block)
                    response, expert_trace = await router.request_expert(
                        str(response.action_input.get('question', '')),
                        expert_prompt,
                        state,
                        config.cascade,
                        self._grammar(env, [a.name for a in base]),
                        from_tier=trace.served_by_tier or 0
                    )
                    traces.append(expert_trace)

                observation = await env.dispatch(response.action_name, response.action_input)
                state.remember_action(action_key(response), window=config.cascade.repeat_threshold)

                events = ledger.since(mark)
                writer.append_step(log, StepRecord(
                    index=index,
                    planner_response=response,
                    escalation_trace=traces,
                    action_name=response.action_name,
                    action_input=response.action_input,
                    observation=observation,
                    usage_event_ids=[e.event_id for e in events],
                    usage_events=events,
                    retrieved_context=context if config.retrieval_enabled else None
                ))
                self.logger.debug("step_completed", run_id=run_id, index=index, action=response.action_name)

                if observation.terminal:
                    status = RunStatus.COMPLETED
                    break
        except CascadeExhausted as e:
            status = RunStatus.CASCADE_EXHAUSTED
            annotation = e.annotation
            failed_trace = e.trace
            self.logger.warning("run_cascade_exhausted", run_id=run_id, step=len(log), annotation=annotation)
        except LifelinesExhausted as e:
            status = RunStatus.CASCADE_EXHAUSTED
            annotation = LIFELINE_CAP_ANNOTATION
            self.logger.warning("run_cascade_exhausted", run_id=run_id, step=len(log), error=e.message)
        except TaskPackageInvalid:
            raise
        except CascadeBenchException as e:
            status = RunStatus.ENV_FATAL
            annotation = e.error_code
            self.logger.error("run_env_fatal", run_id=run_id, step=len(log), error=e.message, error_code=e.error_code)
        except Exception as e:
            status = RunStatus.ENV_FATAL
            annotation = type(e).__name__
            self.logger.error("run_env_fatal", run_id=run_id, step=len(log), error=str(e), exc_info=True)

        final_score: Optional[Decimal] = None
        improvement: Optional[Decimal] = None
        success = False
        if status.evaluates:
            try:
                final_score = await self.run_evaluator(task, workspace_dir)
                improvement, success = evaluate_success(
                    final_score, task.baseline_score, task.metric_direction, task.improvement_mode
                )
            except EvaluationError as e:
                annotation = annotation or e.error_code
                self.logger.warning("evaluation_failed", run_id=run_id, error=e.message)

        recorded = {event_id for record in log.records for event_id in record.usage_event_ids}
        unattributed = [e for e in ledger.events if e.event_id not in recorded]
        cost_report = aggregate(ledger.events, config.models)

        footer = RunFooter(
            status=status.value,
            step_count=len(log),
            final_score=final_score,
            improvement_fraction=improvement,
            success=success,
            lifelines_used=state.lifelines_used,
            unattributed_usage_events=unattributed,
            failed_step_trace=failed_trace,
            total_cost=cost_report.total,
            annotation=annotation,
            finished_at=self._now(config)
        )
        writer.close(log, footer)

        traces = [t for record in log.records for t in record.escalation_trace]
        if failed_trace is not None:
            traces.append(failed_trace)

        self.logger.info(
            "run_finished",
            run_id=run_id,
            status=status.value,
            step_count=len(log),
            final_score=str(final_score) if final_score is not None else None,
            success=success,
            total_cost=str(cost_report.total)
        )
        return RunResult(
            run_id=run_id,
            task_id=task.id,
            status=status,
            final_score=final_score,
            improvement_fraction=improvement,
            success=success,
            step_count=len(log),
            cost_report=cost_report,
            trace_path=writer.path,
            lifelines_used=state.lifelines_used,
            escalation_counts=escalation_counts(traces),
            annotation=annotation
        )

    async def run_batch(
        self,
        task: TaskPackage,
        config: RunConfig,
        n_runs: int,
        parallelism: int = 1
    ) -> BatchReport:
        """
        Run a task n times on disjoint workspace copies

        Args:
            task: Loaded task package
            config: Effective run configuration
            n_runs: Number of runs (>= 1)
            parallelism: Runs executing at the same time

        Returns:
            BatchReport: Per-run rows plus success rate and cost summary

        Raises:
            EmptyRunSet: n_runs < 1
        """
        if n_runs < 1:
            raise EmptyRunSet("A batch needs at least one run")

        semaphore = asyncio.Semaphore(max(parallelism, 1))

        async def one(run_no: int) -> RunResult:
            async with semaphore:
                return await self.run_task(task, config, run_no)

        results = list(await asyncio.gather(*(one(i) for i in range(1, n_runs + 1))))
        return summarize_batch(task.id, results)


def summarize_batch(task_id: str, results: Sequence[RunResult]) -> BatchReport:
    """
    Success rate, cost and escalation summary over a task's runs

    Raises:
        EmptyRunSet: No results
    """
    rate = success_rate(results)
    total = sum((r.cost_report.total for r in results), ZERO_MONEY)

    by_model: dict[str, Decimal] = defaultdict(lambda: ZERO_MONEY)
    escalations: Counter = Counter()
    for result in results:
        for model_id, cost in result.cost_report.breakdown_by_model.items():
            by_model[model_id] += cost
        escalations.update(result.escalation_counts)

    return BatchReport(
        task_id=task_id,
        runs=list(results),
        success_rate=rate,
        total_cost=total,
        average_cost_per_run=to_money(total / len(results)),
        breakdown_by_model=dict(sorted(by_model.items())),
        escalation_counts=dict(sorted(escalations.items())),
        lifeline_histogram=dict(sorted(Counter(r.lifelines_used for r in results).items())),
        notes=list(BATCH_NOTES)
    )
