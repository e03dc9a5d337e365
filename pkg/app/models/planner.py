"""
Planner Models
Structured planner response and classified parse failures
"""
from enum import Enum
from typing import Any
from pydantic import Field

from .base import FrozenModel


class PlannerResponse(FrozenModel):
    """A planner response that passed the grammar"""
    reflection: str
    plan_and_status: str
    fact_check: str
    thought: str
    action_name: str = Field(min_length=1)
    action_input: dict[str, Any] = Field(default_factory=dict)


class ParseFailureKind(str, Enum):
    """Why a response was rejected; every kind counts as a format failure"""
    MISSING_SECTION = "MissingSection"
    MALFORMED_ACTION_INPUT = "MalformedActionInput"
    UNKNOWN_ACTION = "UnknownAction"
    EMPTY_RESPONSE = "EmptyResponse"


class ParseFailure(FrozenModel):
    """A rejected planner response"""
    kind: ParseFailureKind
    detail: str
    offending_text: str = ''
