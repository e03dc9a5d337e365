"""
Circuit breaker tests
"""
import pytest

from app.utils import (
    CircuitBreaker,
    CircuitOpenError,
    CircuitState,
    RateLimited,
    TransportError
)


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self) -> float:
        return self.now


@pytest.fixture
def clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def breaker(clock) -> CircuitBreaker:
    return CircuitBreaker(name="test", fail_threshold=2, recovery_timeout=10, clock=clock)


def failing(exc: Exception):
    async def call():
        raise exc
    return call


async def ok():
    return "ok"


async def test_opens_after_threshold(breaker):
    guarded = breaker(failing(TransportError("down")))

    for _ in range(2):
        with pytest.raises(TransportError):
            await guarded()

    assert breaker.state == CircuitState.OPEN
    with pytest.raises(CircuitOpenError):
        await guarded()


async def test_rate_limits_do_not_count(breaker):
    guarded = breaker(failing(RateLimited("slow down")))

    for _ in range(5):
        with pytest.raises(RateLimited):
            await guarded()

    assert breaker.state == CircuitState.CLOSED


async def test_half_open_then_closed(breaker, clock):
    failing_call = breaker(failing(TransportError("down")))
    for _ in range(2):
        with pytest.raises(TransportError):
            await failing_call()

    clock.now = 10
    assert breaker.state == CircuitState.HALF_OPEN

    assert await breaker(ok)() == "ok"
    assert breaker.state == CircuitState.CLOSED


async def test_half_open_failure_reopens(breaker, clock):
    failing_call = breaker(failing(TransportError("down")))
    for _ in range(2):
        with pytest.raises(TransportError):
            await failing_call()

    clock.now = 11
    with pytest.raises(TransportError):
        await failing_call()

    assert breaker.state == CircuitState.OPEN


async def test_manual_reset(breaker):
    failing_call = breaker(failing(TransportError("down")))
    for _ in range(2):
        with pytest.raises(TransportError):
            await failing_call()

    breaker.reset()

    assert breaker.state == CircuitState.CLOSED
