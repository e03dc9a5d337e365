"""
Cascade Models
Tier chain configuration, escalation state and attempt traces
"""
from enum import Enum
from typing import Optional
from pydantic import Field, model_validator

from .base import DomainModel, FrozenModel
from .gateway import ModelDescriptor
from .planner import ParseFailureKind

# (action name, canonical action input JSON)
ActionKey = tuple[str, str]


class RepeatTrigger(str, Enum):
    """Which occurrence of a repeated action triggers escalation"""
    AT_R = "at_r"  # the proposal that would make r consecutive identical actions
    AFTER_R = "after_r"  # the proposal after r consecutive identical actions


class EscalationReason(str, Enum):
    """Why a tier transition happened"""
    FORMAT_FAILURE = "FormatFailure"
    REPEATED_ACTION = "RepeatedAction"
    EXPERT_REQUESTED = "ExpertRequested"


class AttemptOutcome(str, Enum):
    """Result of one model call inside a step"""
    ACCEPTED = "accepted"
    FORMAT_FAILURE = "format_failure"
    REPEATED_ACTION = "repeated_action"


class CascadeConfig(FrozenModel):
    """Ordered tiers plus repeat and lifeline budgets"""
    tiers: list[ModelDescriptor] = Field(min_length=1)
    repeat_threshold: int = Field(default=3, ge=2)
    lifeline_cap: int = Field(default=5, ge=0)
    expert_tier_index: Optional[int] = Field(default=None, ge=0)
    repeat_trigger: RepeatTrigger = RepeatTrigger.AT_R

    @model_validator(mode='after')
    def check_tiers(self) -> 'CascadeConfig':
        prices = [t.price_per_input_token for t in self.tiers]
        for i in range(1, len(prices)):
            if prices[i] < prices[i - 1]:
                raise ValueError(
                    f"tiers must be ordered by non-decreasing input price; "
                    f"{self.tiers[i].id} is cheaper than {self.tiers[i - 1].id}"
                )
        ids = [t.id for t in self.tiers]
        if len(set(ids)) != len(ids):
            raise ValueError('tier model ids must be unique')
        if self.expert_tier_index is not None and self.expert_tier_index != len(self.tiers) - 1:
            raise ValueError('expert tier must be the last tier')
        return self

    @property
    def expert_tier(self) -> Optional[ModelDescriptor]:
        """Tier whose calls consume lifelines, if any"""
        if self.expert_tier_index is None:
            return None
        return self.tiers[self.expert_tier_index]

    @property
    def top_tier_index(self) -> int:
        return len(self.tiers) - 1


class AttemptRecord(FrozenModel):
    """One model call made while choosing a step's action"""
    tier_index: int = Field(ge=0)
    model_id: str
    attempt_no: int = Field(ge=1)
    outcome: AttemptOutcome
    failure_kind: Optional[ParseFailureKind] = None
    detail: Optional[str] = None
    consumed_lifeline: bool = False
    usage_event_id: Optional[str] = None


class TierTransition(FrozenModel):
    """Move from one tier to the next"""
    from_tier: int = Field(ge=0)
    to_tier: int = Field(ge=0)
    reason: EscalationReason


class EscalationTrace(FrozenModel):
    """Every attempt and transition behind one accepted (or failed) response"""
    mode: str = Field(default='cascade', description='cascade or expert')
    attempts: list[AttemptRecord] = Field(default_factory=list)
    transitions: list[TierTransition] = Field(default_factory=list)
    served_by_tier: Optional[int] = None
    served_by_model: Optional[str] = None


class CascadeState(DomainModel):
    """Per-run escalation state; mutated only by the run loop"""
    lifelines_used: int = Field(default=0, ge=0)
    recent_actions: list[ActionKey] = Field(default_factory=list)
    per_step_attempt_log: list[AttemptRecord] = Field(default_factory=list)

    def remember_action(self, key: ActionKey, window: int) -> None:
        """Push an accepted action into the bounded repeat window"""
        self.recent_actions = (self.recent_actions + [key])[-window:]
