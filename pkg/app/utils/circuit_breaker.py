"""
Circuit Breaker Pattern
Fail fast on remote model endpoints that keep failing at the transport level
"""
import time
from enum import Enum
from typing import Callable, Any, Optional
from functools import wraps
import structlog

from app.config import settings
from app.utils.exceptions import CircuitOpenError, TransportError

logger = structlog.get_logger()


class CircuitState(str, Enum):
    """Circuit Breaker state"""
    CLOSED = "closed"  # normal operation
    OPEN = "open"  # calls rejected
    HALF_OPEN = "half_open"  # one trial call allowed


class CircuitBreaker:
    """
    Circuit Breaker implementation

    After fail_threshold consecutive transport failures the circuit opens and
    calls fail with CircuitOpenError until recovery_timeout seconds elapse.
    Only TransportError counts as a failure; rate limiting and bad responses
    say nothing about endpoint health.

    Example:
        breaker = CircuitBreaker(name="gpt-4")

        @breaker
        async def call_endpoint():
            ...
    """

    def __init__(
        self,
        name: str,
        fail_threshold: Optional[int] = None,
        recovery_timeout: Optional[int] = None,
        clock: Callable[[], float] = time.monotonic
    ):
        """
        Initialize Circuit Breaker

        Args:
            name: Endpoint name used in logs
            fail_threshold: Number of failures before opening circuit
            recovery_timeout: Seconds before attempting recovery
            clock: Monotonic time source
        """
        self.name = name
        self.fail_threshold = fail_threshold or settings.circuit_breaker.fail_threshold
        self.recovery_timeout = recovery_timeout or settings.circuit_breaker.recovery_timeout
        self._clock = clock

        self._failure_count = 0
        self._opened_at: Optional[float] = None
        self._state = CircuitState.CLOSED

    @property
    def state(self) -> CircuitState:
        """Get current circuit state"""
        if self._state == CircuitState.OPEN and self._should_attempt_reset():
            self._state = CircuitState.HALF_OPEN
            logger.info(
                "circuit_breaker_half_open",
                endpoint=self.name,
                failure_count=self._failure_count
            )
        return self._state

    def _should_attempt_reset(self) -> bool:
        """Check if enough time has passed to attempt reset"""
        if self._opened_at is None:
            return False
        return self._clock() - self._opened_at >= self.recovery_timeout

    def _on_success(self) -> None:
        self._failure_count = 0
        self._opened_at = None
        if self._state != CircuitState.CLOSED:
            logger.info("circuit_breaker_closed", endpoint=self.name)
            self._state = CircuitState.CLOSED

    def _on_failure(self) -> None:
        self._failure_count += 1

        logger.warning(
            "circuit_breaker_failure",
            endpoint=self.name,
            failure_count=self._failure_count,
            threshold=self.fail_threshold
        )

        if self._state == CircuitState.HALF_OPEN or self._failure_count >= self.fail_threshold:
            self._state = CircuitState.OPEN
            self._opened_at = self._clock()
            logger.error(
                "circuit_breaker_opened",
                endpoint=self.name,
                failure_count=self._failure_count,
                recovery_timeout=self.recovery_timeout
            )

    def __call__(self, func: Callable) -> Callable:
        """Decorator to wrap an async function with the circuit breaker"""
        @wraps(func)
        async def wrapper(*args, **kwargs) -> Any:
            if self.state == CircuitState.OPEN:
                logger.warning(
                    "circuit_breaker_call_blocked",
                    endpoint=self.name
                )
                raise CircuitOpenError(
                    f"Circuit breaker is OPEN for {self.name}",
                    details={"endpoint": self.name}
                )

            try:
                result = await func(*args, **kwargs)
            except TransportError:
                self._on_failure()
                raise
            self._on_success()
            return result

        return wrapper

    def reset(self) -> None:
        """Manually reset circuit breaker"""
        self._failure_count = 0
        self._opened_at = None
        self._state = CircuitState.CLOSED
        logger.info("circuit_breaker_manually_reset", endpoint=self.name)
