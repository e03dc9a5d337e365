"""
Model Gateway Service
Uniform completion interface over remote chat endpoints and scripted backends
"""
import math
import os
import time
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional, Protocol

import openai
import yaml
from openai import AsyncOpenAI
from tenacity import AsyncRetrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from app.config import settings
from app.models import (
    CompletionRequest,
    CompletionResult,
    EndpointKind,
    ModelDescriptor
)
from app.utils import (
    CircuitBreaker,
    ConfigurationError,
    CredentialsMissing,
    GatewayError,
    LoggerMixin,
    RateLimited,
    ScriptExhausted,
    TransportError
)

if TYPE_CHECKING:
    from app.services.cost_ledger import CostLedger


class CompletionBackend(Protocol):
    """Anything that can serve a completion for one model"""

    async def complete(self, request: CompletionRequest) -> CompletionResult:
        ...


class ScriptedBackend(LoggerMixin):
    """
    Deterministic backend returning canned replies in FIFO order

    Token counts come from a chars-per-token stub so tests can predict them.
    Every request is kept in `requests` for inspection.
    """

    def __init__(self, responses: Iterable[str], chars_per_token: float = 4.0, model_id: str = 'scripted'):
        if chars_per_token <= 0:
            raise ValueError('chars_per_token must be positive')
        self.model_id = model_id
        self.chars_per_token = chars_per_token
        self._queue = list(responses)
        self._index = 0
        self.requests: list[CompletionRequest] = []

    @property
    def remaining(self) -> int:
        return len(self._queue) - self._index

    def count_tokens(self, text: str) -> int:
        """ceil(len(text) / chars_per_token)"""
        return math.ceil(len(text) / self.chars_per_token)

    async def complete(self, request: CompletionRequest) -> CompletionResult:
        if self._index >= len(self._queue):
            raise ScriptExhausted(
                f"Scripted backend '{self.model_id}' has no queued response",
                details={"model_id": self.model_id, "served": self._index}
            )
        reply = self._queue[self._index]
        self._index += 1
        self.requests.append(request)

        return CompletionResult(
            text=reply,
            tokens_in=self.count_tokens(request.prompt),
            tokens_out=self.count_tokens(reply),
            model_id=self.model_id,
            latency_ms=0
        )


def script_backend(responses: Iterable[str], chars_per_token: float = 4.0) -> ScriptedBackend:
    """
    Build a scripted backend

    Args:
        responses: Canned replies, served in order (may be empty)
        chars_per_token: Tokenizer stub ratio

    Returns:
        ScriptedBackend: Backend handle for ModelGateway
    """
    return ScriptedBackend(responses, chars_per_token=chars_per_token)


def _retry_after_hint(error: openai.APIStatusError) -> Optional[float]:
    """Seconds from a numeric retry-after header, if any"""
    value = error.response.headers.get('retry-after') if error.response is not None else None
    try:
        return float(value) if value else None
    except ValueError:
        return None


class RemoteBackend(LoggerMixin):
    """
    Chat-completions endpoint reached through the OpenAI SDK

    One request shape for every model: a system message carrying the
    profile and one user message carrying the prompt. Token counts come
    from the endpoint's reported usage.
    """

    def __init__(
        self,
        model: ModelDescriptor,
        client: Optional[AsyncOpenAI] = None,
        breaker: Optional[CircuitBreaker] = None
    ):
        self.model = model
        self._client = client
        self._breaker = breaker or CircuitBreaker(name=model.id)
        self._guarded_call = self._breaker(self._call)

    def _get_client(self) -> AsyncOpenAI:
        """Create the SDK client on first use so missing keys surface per call"""
        if self._client is None:
            api_key = os.environ.get(self.model.credential_env)
            if not api_key:
                raise CredentialsMissing(
                    f"Environment variable {self.model.credential_env} is not set",
                    details={"model_id": self.model.id, "variable": self.model.credential_env}
                )
            self._client = AsyncOpenAI(
                api_key=api_key,
                base_url=self.model.endpoint.base_url,
                timeout=settings.gateway.timeout_s,
                max_retries=0
            )
        return self._client

    @staticmethod
    def build_messages(request: CompletionRequest) -> list[dict[str, str]]:
        """Serialize a request into chat messages"""
        return [
            {"role": "system", "content": request.profile},
            {"role": "user", "content": request.prompt}
        ]

    async def _call(self, request: CompletionRequest) -> CompletionResult:
        client = self._get_client()
        started = time.monotonic()

        try:
            response = await client.chat.completions.create(
                model=self.model.wire_name,
                messages=self.build_messages(request),
                temperature=request.temperature,
                max_tokens=request.max_output_tokens,
                stop=request.stop_sequences or None
            )
        except openai.RateLimitError as e:
            raise RateLimited(
                f"Rate limited by {self.model.id}",
                retry_after=_retry_after_hint(e),
                details={"model_id": self.model.id}
            ) from e
        except openai.AuthenticationError as e:
            raise CredentialsMissing(
                f"Endpoint rejected credentials for {self.model.id}",
                details={"model_id": self.model.id, "variable": self.model.credential_env}
            ) from e
        except openai.APIConnectionError as e:
            # includes APITimeoutError
            raise TransportError(
                f"Transport failure talking to {self.model.id}: {e}",
                details={"model_id": self.model.id}
            ) from e
        except openai.APIStatusError as e:
            if e.status_code >= 500:
                raise TransportError(
                    f"Endpoint error {e.status_code} from {self.model.id}",
                    details={"model_id": self.model.id, "status_code": e.status_code}
                ) from e
            raise GatewayError(
                f"Request rejected by {self.model.id}: {e.status_code}",
                details={"model_id": self.model.id, "status_code": e.status_code}
            ) from e

        usage = response.usage
        text = response.choices[0].message.content if response.choices else ''

        return CompletionResult(
            text=text,
            tokens_in=usage.prompt_tokens if usage else 0,
            tokens_out=usage.completion_tokens if usage else 0,
            model_id=self.model.id,
            latency_ms=int((time.monotonic() - started) * 1000)
        )

    async def complete(self, request: CompletionRequest) -> CompletionResult:
        """
        Call the endpoint, retrying rate limits with exponential backoff

        Raises:
            RateLimited: Still rate limited after the configured retries
            TransportError: Network failure, timeout or open circuit
            CredentialsMissing: No API key in the environment
        """
        retrying = AsyncRetrying(
            retry=retry_if_exception_type(RateLimited),
            stop=stop_after_attempt(settings.gateway.rate_limit_retries + 1),
            wait=wait_exponential(
                multiplier=settings.gateway.backoff_base_s,
                max=settings.gateway.backoff_max_s
            ),
            before_sleep=lambda state: self.logger.warning(
                "rate_limited_retrying",
                model_id=self.model.id,
                attempt=state.attempt_number
            ),
            reraise=True
        )
        async for attempt in retrying:
            with attempt:
                return await self._guarded_call(request)
        raise GatewayError(f"Retry loop ended without a result for {self.model.id}")


def load_script_file(path: Path) -> list[str]:
    """
    Read canned replies from YAML

    Accepts either a bare list of strings or a mapping with a `responses` list.
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"Cannot read script file {path}: {e}") from e

    if isinstance(data, dict):
        data = data.get('responses')
    if not isinstance(data, list) or not all(isinstance(r, str) for r in data):
        raise ConfigurationError(
            f"Script file {path} must hold a list of strings",
            details={"path": str(path)}
        )
    return data


class ModelGateway(LoggerMixin):
    """
    Routes completion requests to the backend bound to each model

    One gateway per run: scripted backends are single-consumer.
    """

    def __init__(self, backends: dict[str, CompletionBackend]):
        """
        Initialize gateway

        Args:
            backends: Model id -> backend
        """
        self._backends = dict(backends)

    @classmethod
    def from_descriptors(
        cls,
        models: Iterable[ModelDescriptor],
        base_dir: Optional[Path] = None
    ) -> 'ModelGateway':
        """
        Build backends from model endpoint bindings

        Args:
            models: Model descriptors
            base_dir: Directory script files are resolved against

        Returns:
            ModelGateway: Gateway with one backend per model
        """
        backends: dict[str, CompletionBackend] = {}
        for model in models:
            endpoint = model.endpoint
            if endpoint.kind == EndpointKind.SCRIPTED:
                responses = list(endpoint.responses)
                if endpoint.script_file:
                    script_path = Path(endpoint.script_file)
                    if base_dir is not None and not script_path.is_absolute():
                        script_path = base_dir / script_path
                    responses.extend(load_script_file(script_path))
                backends[model.id] = ScriptedBackend(
                    responses,
                    chars_per_token=endpoint.chars_per_token,
                    model_id=model.id
                )
            else:
                backends[model.id] = RemoteBackend(model)
        return cls(backends)

    def backend(self, model_id: str) -> CompletionBackend:
        """Get the backend bound to a model id"""
        try:
            return self._backends[model_id]
        except KeyError:
            raise GatewayError(
                f"No backend bound to model '{model_id}'",
                details={"model_id": model_id}
            ) from None

    async def complete(
        self,
        model: ModelDescriptor,
        request: CompletionRequest,
        ledger: Optional['CostLedger'] = None
    ) -> CompletionResult:
        """
        Serve one completion and record its usage

        The text is returned as-is; interpreting it is the caller's job.

        Args:
            model: Model to call
            request: Completion request
            ledger: Per-run ledger receiving exactly one UsageEvent on success

        Returns:
            CompletionResult: Text, token counts and the usage event id

        Raises:
            TransportError, RateLimited, ScriptExhausted, CredentialsMissing
        """
        result = await self.backend(model.id).complete(request)
        result = result.model_copy(update={'model_id': model.id})

        if ledger is not None:
            event = ledger.record(
                model_id=model.id,
                purpose=request.purpose,
                tokens_in=result.tokens_in,
                tokens_out=result.tokens_out,
                temperature=request.temperature,
                profile=request.profile
            )
            result = result.model_copy(update={'usage_event_id': event.event_id})

        self.logger.debug(
            "completion_served",
            model_id=model.id,
            purpose=request.purpose.value,
            tokens_in=result.tokens_in,
            tokens_out=result.tokens_out,
            latency_ms=result.latency_ms
        )
        return result
