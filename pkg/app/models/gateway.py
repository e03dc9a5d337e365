"""
Gateway Models
Model descriptors and completion request/result shapes
"""
import re
from decimal import Decimal
from enum import Enum
from typing import Optional
from pydantic import BaseModel, Field, field_validator, model_validator

from app.config import settings
from .base import ExactDecimal, FrozenModel
from .usage import UsagePurpose


class EndpointKind(str, Enum):
    """Backend a model is bound to"""
    REMOTE = "remote"
    SCRIPTED = "scripted"


class EndpointBinding(FrozenModel):
    """How to reach a model"""
    kind: EndpointKind = EndpointKind.REMOTE

    # remote (chat-completions style)
    base_url: Optional[str] = Field(default=None, description='Chat-completions base URL')
    api_key_env: Optional[str] = Field(default=None, description='Credential variable name')
    model_name: Optional[str] = Field(default=None, description='Model name sent on the wire')

    # scripted
    responses: list[str] = Field(default_factory=list, description='Canned replies, in order')
    script_file: Optional[str] = Field(default=None, description='YAML file holding canned replies')
    chars_per_token: float = Field(default=4.0, gt=0, description='Tokenizer stub ratio')


class ModelDescriptor(FrozenModel):
    """A model tier: identity, prices, retry budget, endpoint"""
    id: str = Field(min_length=1)
    tier_rank: int = Field(default=0, ge=0)
    price_per_input_token: ExactDecimal = Field(default=Decimal(0), ge=0)
    price_per_output_token: ExactDecimal = Field(default=Decimal(0), ge=0)
    max_format_retries: int = Field(default=3, ge=1)
    endpoint: EndpointBinding = Field(default_factory=EndpointBinding)

    @property
    def is_no_cost(self) -> bool:
        """Both prices are zero"""
        return self.price_per_input_token == 0 and self.price_per_output_token == 0

    @property
    def credential_env(self) -> str:
        """Environment variable holding this model's API key"""
        if self.endpoint.api_key_env:
            return self.endpoint.api_key_env
        return re.sub(r'[^A-Za-z0-9]', '_', self.id).upper() + '_API_KEY'

    @property
    def wire_name(self) -> str:
        """Model name used in remote requests"""
        return self.endpoint.model_name or self.id


class CompletionRequest(BaseModel):
    """A single chat-style completion request"""
    profile: str = Field(default='', description='System prompt (may be empty)')
    prompt: str = Field(min_length=1)
    temperature: float = Field(ge=0.0, le=1.0)
    max_output_tokens: int = Field(default_factory=lambda: settings.gateway.max_output_tokens, ge=1)
    stop_sequences: list[str] = Field(default_factory=list)
    purpose: UsagePurpose = UsagePurpose.PLANNING


class CompletionResult(BaseModel):
    """Model text plus billed token counts"""
    text: str
    tokens_in: int = Field(ge=0)
    tokens_out: int = Field(ge=0)
    model_id: str
    latency_ms: int = Field(default=0, ge=0)
    usage_event_id: Optional[str] = None

    @field_validator('text', mode='before')
    @classmethod
    def none_text_is_empty(cls, v: Optional[str]) -> str:
        """Endpoints return null content on empty completions"""
        return v or ''


class PricingEntry(FrozenModel):
    """Per-token prices for one model (pricing file row)"""
    price_per_input_token: ExactDecimal = Field(ge=0)
    price_per_output_token: ExactDecimal = Field(ge=0)


class PricingFile(BaseModel):
    """Pricing file: model id -> prices"""
    models: dict[str, PricingEntry]
    as_of: Optional[str] = None

    @model_validator(mode='after')
    def non_empty(self) -> 'PricingFile':
        if not self.models:
            raise ValueError('pricing file lists no models')
        return self
