"""
Research log and retrieval tests
"""
import pytest

from app.models import (
    DISABLED,
    CompletionRequest,
    Observation,
    PlannerResponse,
    ResearchLog,
    RunFooter,
    RunHeader,
    StepRecord,
    UsagePurpose
)
from app.repositories import TraceRepository
from app.services.gateway_service import ModelGateway, ScriptedBackend
from app.services.memory_service import (
    RETRIEVAL_PROMPT_HEADER,
    ResearchLogWriter,
    RetrievalService,
    build_retrieval_prompt,
    recent_window
)
from app.utils import IndexGap, ScriptExhausted, TransportError
from tests.factories import make_model


class FailingBackend:
    async def complete(self, request: CompletionRequest):
        raise TransportError("timed out")


def header(run_id: str = "tiny-default-r001") -> RunHeader:
    return RunHeader(
        run_id=run_id,
        task_id="tiny",
        config_hash="0123456789abcdef",
        prompt_template_version="planner-prompt/1",
        started_at="2024-03-01T00:00:00+00:00",
        run_config={}
    )


def record(index: int) -> StepRecord:
    return StepRecord(
        index=index,
        planner_response=PlannerResponse(
            reflection="r", plan_and_status=f"plan {index}", fact_check="f", thought="t",
            action_name="List Files", action_input={"dir_path": f"d{index}"}
        ),
        action_name="List Files",
        action_input={"dir_path": f"d{index}"},
        observation=Observation(text=f"listing {index}", source_action="List Files")
    )


def make_log(n: int) -> ResearchLog:
    return ResearchLog(header=header(), records=[record(i) for i in range(n)])


def retrieval(ledger, backend) -> RetrievalService:
    return RetrievalService(ModelGateway({'worker': backend}), ledger, make_model('worker'), short_term_k=3)


class TestRecentWindow:
    def test_last_k_oldest_first(self):
        assert [r.index for r in recent_window(make_log(5), 3)] == [2, 3, 4]

    def test_short_log(self):
        assert [r.index for r in recent_window(make_log(2), 3)] == [0, 1]

    def test_zero_k(self):
        assert recent_window(make_log(5), 0) == []


class TestRetrieval:
    async def test_disabled_makes_no_call(self, ledger):
        backend = ScriptedBackend(["summary"], model_id='worker')

        context = await retrieval(ledger, backend).retrieve(make_log(10), "plan", enabled=False)

        assert context.produced_by == DISABLED
        assert context.is_empty
        assert backend.requests == []

    async def test_nothing_older_than_window(self, ledger):
        backend = ScriptedBackend([], model_id='worker')

        context = await retrieval(ledger, backend).retrieve(make_log(3), "plan", enabled=True)

        assert context.is_empty
        assert context.produced_by == 'worker'
        assert context.source_step_range is None
        assert ledger.events == []

    async def test_only_older_steps_are_summarized(self, ledger):
        backend = ScriptedBackend(["  Listed d0 and d1.  "], model_id='worker')

        context = await retrieval(ledger, backend).retrieve(make_log(5), "plan 4", enabled=True)

        prompt = backend.requests[0].prompt
        assert prompt.startswith(RETRIEVAL_PROMPT_HEADER)
        assert "Step 0:" in prompt and "Step 1:" in prompt
        assert "Step 2:" not in prompt
        assert "plan 4" in prompt
        assert context.summary == "Listed d0 and d1."
        assert context.source_step_range == (0, 1)
        assert [e.purpose for e in ledger.events] == [UsagePurpose.RETRIEVAL]

    async def test_worker_failure_gives_empty_context(self, ledger):
        context = await retrieval(ledger, FailingBackend()).retrieve(make_log(5), "plan", enabled=True)

        assert context.is_empty
        assert context.error == "timed out"
        assert context.source_step_range == (0, 1)

    async def test_exhausted_script_propagates(self, ledger):
        with pytest.raises(ScriptExhausted):
            await retrieval(ledger, ScriptedBackend([])).retrieve(make_log(5), "plan", enabled=True)


def test_retrieval_prompt_without_plan():
    assert "(no plan yet)" in build_retrieval_prompt([record(0)], "  ")


class TestResearchLogWriter:
    def test_append_is_durable(self, tmp_path):
        repository = TraceRepository(tmp_path)
        writer = ResearchLogWriter(repository)
        log = writer.open(header())

        writer.append_step(log, record(0))
        writer.append_step(log, record(1))

        loaded = repository.load(writer.path)
        assert [r.index for r in loaded.records] == [0, 1]
        assert loaded.footer is None

    def test_index_gap(self, tmp_path):
        writer = ResearchLogWriter(TraceRepository(tmp_path))
        log = writer.open(header())

        with pytest.raises(IndexGap):
            writer.append_step(log, record(1))
        assert len(log) == 0

    def test_close_writes_footer(self, tmp_path):
        repository = TraceRepository(tmp_path)
        writer = ResearchLogWriter(repository)
        log = writer.open(header())
        writer.append_step(log, record(0))

        writer.close(log, RunFooter(status="Completed", step_count=1, finished_at="2024-03-01T00:00:00+00:00"))

        loaded = repository.load(writer.path)
        assert loaded.footer.status == "Completed"
        assert loaded == log
