"""
Usage Models
Token usage events and cost reports
"""
from decimal import Decimal
from enum import Enum
from typing import Optional
from pydantic import Field

from .base import FrozenModel, ZERO_MONEY


class UsagePurpose(str, Enum):
    """Why a model call was made"""
    PLANNING = "planning"
    WORKER_ACTION = "worker_action"
    RETRIEVAL = "retrieval"
    EXPERT = "expert"


class UsageEvent(FrozenModel):
    """One successful model completion, as billed"""
    event_id: str = Field(description='Run-unique id, "<run_id>:<seq>"')
    run_id: str
    step_index: int = Field(ge=0)
    model_id: str
    purpose: UsagePurpose
    tokens_in: int = Field(ge=0)
    tokens_out: int = Field(ge=0)
    temperature: float = Field(ge=0.0, le=1.0)
    profile: str = Field(default='', description='System prompt the call was made with')


class CostReport(FrozenModel):
    """Aggregated cost of a set of usage events"""
    per_event_costs: list[Decimal] = Field(default_factory=list)
    total: Decimal = ZERO_MONEY
    breakdown_by_model: dict[str, Decimal] = Field(default_factory=dict)
    breakdown_by_purpose: dict[str, Decimal] = Field(default_factory=dict)
    tokens_in: int = 0
    tokens_out: int = 0
    run_count: int = Field(default=1, ge=0)
    average_per_run: Optional[Decimal] = None
