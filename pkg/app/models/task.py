"""
Task Models
Task packages, run configuration, run results and the experiment config file
"""
from datetime import datetime
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Optional, Union
from pydantic import Field, field_validator, model_validator

from app.config import settings
from .action import AgentProfiles
from .base import ExactDecimal, FrozenModel, ZERO_MONEY
from .cascade import CascadeConfig, RepeatTrigger
from .gateway import ModelDescriptor, PricingFile
from .usage import CostReport


class MetricDirection(str, Enum):
    """Whether the evaluator score should go up or down"""
    HIGHER_IS_BETTER = "higher_is_better"
    LOWER_IS_BETTER = "lower_is_better"


class ImprovementMode(str, Enum):
    """How improvement over the baseline is measured"""
    RELATIVE = "relative"  # (final - baseline) / |baseline|
    ABSOLUTE = "absolute"  # final - baseline


class EvaluatorSpec(FrozenModel):
    """Command that prints the score as its last stdout line"""
    command: str = Field(min_length=1, description='Supports {task_dir} and {workspace} placeholders')
    timeout_s: int = Field(default=600, ge=1)


class TaskManifest(FrozenModel):
    """task.yaml inside a task package"""
    id: str = Field(min_length=1)
    baseline_score: ExactDecimal
    metric_direction: MetricDirection = MetricDirection.HIGHER_IS_BETTER
    improvement_mode: ImprovementMode = ImprovementMode.RELATIVE
    interpreter_command: str = Field(default='python3', min_length=1)
    execute_timeout_s: int = Field(default_factory=lambda: settings.environment.execute_timeout_s, ge=1)
    evaluator: EvaluatorSpec
    description_file: str = 'description.txt'
    workspace_dir: str = 'workspace'

    @field_validator('baseline_score')
    @classmethod
    def baseline_finite(cls, v: Decimal) -> Decimal:
        if not v.is_finite():
            raise ValueError('baseline_score must be finite')
        return v


class TaskPackage(FrozenModel):
    """A runnable task: manifest plus resolved package paths"""
    manifest: TaskManifest
    description_text: str
    root_dir: Path
    seed_workspace: Path

    @property
    def id(self) -> str:
        return self.manifest.id

    @property
    def baseline_score(self) -> Decimal:
        return self.manifest.baseline_score

    @property
    def metric_direction(self) -> MetricDirection:
        return self.manifest.metric_direction

    @property
    def improvement_mode(self) -> ImprovementMode:
        return self.manifest.improvement_mode

    @property
    def evaluator(self) -> EvaluatorSpec:
        return self.manifest.evaluator

    @property
    def interpreter_command(self) -> str:
        return self.manifest.interpreter_command

    @property
    def execute_timeout_s(self) -> int:
        return self.manifest.execute_timeout_s


class RunConfig(FrozenModel):
    """Effective configuration of one run"""
    max_actions: int = Field(default=30, ge=1)
    short_term_k: int = Field(default=3, ge=0)
    retrieval_enabled: bool = True
    cascade: CascadeConfig
    planning_temperature: float = Field(default=0.2, ge=0.0, le=1.0)
    worker_temperature: float = Field(default=0.01, ge=0.0, le=1.0)
    seed_label: str = 'default'
    worker_model: ModelDescriptor
    profiles: AgentProfiles = Field(default_factory=AgentProfiles)
    frozen_clock: Optional[datetime] = Field(
        default=None,
        description='Fixed timestamp for every trace record (reproducible traces)'
    )

    @property
    def models(self) -> dict[str, ModelDescriptor]:
        """Every model the run may call, by id"""
        table = {m.id: m for m in self.cascade.tiers}
        table.setdefault(self.worker_model.id, self.worker_model)
        return table


class RunStatus(str, Enum):
    """How a run ended"""
    COMPLETED = "Completed"
    MAX_ACTIONS_REACHED = "MaxActionsReached"
    CASCADE_EXHAUSTED = "CascadeExhausted"
    ENV_FATAL = "EnvFatal"

    @property
    def evaluates(self) -> bool:
        """Whether the evaluator runs on the final workspace"""
        return self in (RunStatus.COMPLETED, RunStatus.MAX_ACTIONS_REACHED)


class RunResult(FrozenModel):
    """Outcome of one run"""
    run_id: str
    task_id: str
    status: RunStatus
    final_score: Optional[Decimal] = None
    improvement_fraction: Optional[Decimal] = None
    success: bool = False
    step_count: int = Field(ge=0)
    cost_report: CostReport = Field(default_factory=CostReport)
    trace_path: Optional[Path] = None
    lifelines_used: int = 0
    escalation_counts: dict[str, int] = Field(default_factory=dict)
    annotation: Optional[str] = None

    @model_validator(mode='after')
    def success_needs_score(self) -> 'RunResult':
        if self.success and self.final_score is None:
            raise ValueError('a successful run must have a final score')
        return self


class BatchReport(FrozenModel):
    """Table-style summary over several runs of one task"""
    task_id: str
    runs: list[RunResult]
    success_rate: Decimal
    total_cost: Decimal = ZERO_MONEY
    average_cost_per_run: Decimal = ZERO_MONEY
    breakdown_by_model: dict[str, Decimal] = Field(default_factory=dict)
    escalation_counts: dict[str, int] = Field(default_factory=dict)
    lifeline_histogram: dict[int, int] = Field(default_factory=dict)
    notes: list[str] = Field(default_factory=list)


class ReportSummary(FrozenModel):
    """Batch reports recomputed from a directory of traces"""
    batches: list[BatchReport]
    trace_count: int = Field(ge=0)
    incomplete_runs: list[str] = Field(default_factory=list, description='Runs whose trace has no footer')
    cost_mismatches: list[str] = Field(
        default_factory=list,
        description='Runs whose stored total differs from the recomputed one'
    )


# Experiment config file sections

class CascadeSection(FrozenModel):
    """`cascade:` section; tier ids refer to `models`"""
    tiers: Optional[list[str]] = Field(default=None, description='Defaults to every model, in file order')
    repeat_threshold: int = Field(default=3, ge=2)
    lifeline_cap: int = Field(default=5, ge=0)
    expert_tier: Optional[str] = Field(
        default='last',
        description='"last" = last tier when there are two or more; null = pure cascade'
    )
    repeat_trigger: RepeatTrigger = RepeatTrigger.AT_R


class RunSection(FrozenModel):
    """`run:` section"""
    max_actions: int = Field(default=30, ge=1)
    short_term_k: int = Field(default=3, ge=0)
    retrieval_enabled: bool = True
    planning_temperature: float = Field(default=0.2, ge=0.0, le=1.0)
    worker_temperature: float = Field(default=0.01, ge=0.0, le=1.0)
    seed_label: str = 'default'
    frozen_clock: Optional[datetime] = None


class ExperimentConfig(FrozenModel):
    """One experiment config file"""
    models: list[ModelDescriptor] = Field(min_length=1)
    pricing_file: Optional[str] = None
    cascade: CascadeSection = Field(default_factory=CascadeSection)
    run: RunSection = Field(default_factory=RunSection)
    worker_model: Optional[str] = None
    profiles: AgentProfiles = Field(default_factory=AgentProfiles)

    @model_validator(mode='after')
    def references_resolve(self) -> 'ExperimentConfig':
        ids = [m.id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValueError('model ids must be unique')
        for tier in self.cascade.tiers or []:
            if tier not in ids:
                raise ValueError(f"cascade tier '{tier}' is not a declared model")
        if self.worker_model is not None and self.worker_model not in ids:
            raise ValueError(f"worker_model '{self.worker_model}' is not a declared model")
        expert = self.cascade.expert_tier
        if expert not in (None, 'last'):
            tiers = self.cascade.tiers or ids
            if not tiers or expert != tiers[-1]:
                raise ValueError(f"expert_tier '{expert}' must name the last cascade tier")
        return self

    def with_overrides(self, **run_overrides: Union[int, bool, float, str, None]) -> 'ExperimentConfig':
        """Apply CLI overrides to the run section; None means not given"""
        given = {k: v for k, v in run_overrides.items() if v is not None}
        if not given:
            return self
        run = RunSection.model_validate({**self.run.model_dump(), **given})
        return self.model_copy(update={'run': run})

    def to_run_config(self, pricing: Optional[PricingFile] = None) -> RunConfig:
        """
        Resolve the file into an effective run configuration

        Args:
            pricing: Pricing file whose entries override model prices

        Returns:
            RunConfig: Tiers ranked in cascade order, worker model resolved
        """
        by_id: dict[str, ModelDescriptor] = {}
        for model in self.models:
            if pricing and model.id in pricing.models:
                entry = pricing.models[model.id]
                model = model.model_copy(update={
                    'price_per_input_token': entry.price_per_input_token,
                    'price_per_output_token': entry.price_per_output_token
                })
            by_id[model.id] = model

        tier_ids = self.cascade.tiers or [m.id for m in self.models]
        tiers = [by_id[t].model_copy(update={'tier_rank': i}) for i, t in enumerate(tier_ids)]

        expert_index: Optional[int] = None
        if self.cascade.expert_tier == 'last':
            expert_index = len(tiers) - 1 if len(tiers) >= 2 else None
        elif self.cascade.expert_tier is not None:
            expert_index = len(tiers) - 1

        cascade = CascadeConfig(
            tiers=tiers,
            repeat_threshold=self.cascade.repeat_threshold,
            lifeline_cap=self.cascade.lifeline_cap,
            expert_tier_index=expert_index,
            repeat_trigger=self.cascade.repeat_trigger
        )

        if self.worker_model is not None:
            worker = by_id[self.worker_model]
        else:
            worker = tiers[0]

        return RunConfig(
            max_actions=self.run.max_actions,
            short_term_k=self.run.short_term_k,
            retrieval_enabled=self.run.retrieval_enabled,
            cascade=cascade,
            planning_temperature=self.run.planning_temperature,
            worker_temperature=self.run.worker_temperature,
            seed_label=self.run.seed_label,
            worker_model=worker,
            profiles=self.profiles,
            frozen_clock=self.run.frozen_clock
        )
