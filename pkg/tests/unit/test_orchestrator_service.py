"""
Run orchestrator helper tests
"""
from decimal import Decimal

import pytest

from app.models import (
    CostReport,
    EscalationReason,
    EscalationTrace,
    ImprovementMode,
    MetricDirection,
    RunResult,
    RunStatus,
    TierTransition
)
from app.repositories import TraceRepository, load_task_package
from app.services.orchestrator_service import (
    RunOrchestrator,
    config_hash,
    escalation_counts,
    evaluate_success,
    success_rate,
    summarize_batch
)
from app.utils import BaselineDegenerate, EmptyRunSet, EvaluatorFailed
from tests.conftest import write_task
from tests.factories import three_tier_config


def result(run_no: int, success: bool, cost: str = '0', lifelines: int = 0, **kwargs) -> RunResult:
    return RunResult(
        run_id=f"t-default-r{run_no:03d}",
        task_id="t",
        status=RunStatus.COMPLETED,
        final_score=Decimal('0.6') if success else Decimal('0.5'),
        success=success,
        step_count=3,
        cost_report=CostReport(total=Decimal(cost), breakdown_by_model={'m': Decimal(cost)}),
        lifelines_used=lifelines,
        **kwargs
    )


class TestEvaluateSuccess:
    def test_above_ten_percent(self):
        improvement, success = evaluate_success('0.56', '0.50')
        assert improvement == Decimal('0.12')
        assert success

    def test_exactly_ten_percent_is_not_success(self):
        improvement, success = evaluate_success('0.55', '0.50')
        assert improvement == Decimal('0.1')
        assert not success

    def test_float_inputs_are_exact(self):
        assert evaluate_success(0.55, 0.5) == (Decimal('0.1'), False)

    def test_lower_is_better(self):
        improvement, success = evaluate_success('0.40', '0.50', MetricDirection.LOWER_IS_BETTER)
        assert improvement == Decimal('0.2')
        assert success

    def test_negative_baseline_uses_magnitude(self):
        improvement, _ = evaluate_success('-0.9', '-1.0')
        assert improvement == Decimal('0.1')

    def test_absolute_mode(self):
        improvement, success = evaluate_success('0.15', '0', mode=ImprovementMode.ABSOLUTE)
        assert improvement == Decimal('0.15')
        assert success

    def test_zero_baseline_relative(self):
        with pytest.raises(BaselineDegenerate):
            evaluate_success('0.3', '0')


class TestSuccessRate:
    def test_two_of_four(self):
        runs = [result(1, True), result(2, False), result(3, False), result(4, True)]
        assert success_rate(runs) == Decimal('50.00')

    def test_rounds_to_hundredths(self):
        assert success_rate([result(1, True), result(2, False), result(3, False)]) == Decimal('33.33')

    def test_empty(self):
        with pytest.raises(EmptyRunSet):
            success_rate([])


def test_config_hash_is_stable_and_sensitive():
    config = three_tier_config()
    assert config_hash(config) == config_hash(three_tier_config())
    assert config_hash(config) != config_hash(three_tier_config(max_actions=5))
    assert len(config_hash(config)) == 16


def test_escalation_counts():
    traces = [
        EscalationTrace(transitions=[
            TierTransition(from_tier=0, to_tier=1, reason=EscalationReason.FORMAT_FAILURE),
            TierTransition(from_tier=1, to_tier=2, reason=EscalationReason.REPEATED_ACTION),
        ]),
        EscalationTrace(transitions=[TierTransition(from_tier=0, to_tier=1, reason=EscalationReason.FORMAT_FAILURE)]),
    ]
    assert escalation_counts(traces) == {"FormatFailure": 2, "RepeatedAction": 1}


def test_summarize_batch():
    runs = [
        result(1, True, '0.010000', lifelines=1, escalation_counts={"FormatFailure": 2}),
        result(2, False, '0.020000', lifelines=0, escalation_counts={"FormatFailure": 1, "ExpertRequested": 1}),
    ]

    report = summarize_batch("t", runs)

    assert report.success_rate == Decimal('50.00')
    assert report.total_cost == Decimal('0.030000')
    assert report.average_cost_per_run == Decimal('0.015000')
    assert report.breakdown_by_model == {'m': Decimal('0.030000')}
    assert report.escalation_counts == {"ExpertRequested": 1, "FormatFailure": 3}
    assert report.lifeline_histogram == {0: 1, 1: 1}
    assert any("Retrieval" in note for note in report.notes)


class TestRunEvaluator:
    def orchestrator(self, tmp_path) -> RunOrchestrator:
        return RunOrchestrator(TraceRepository(tmp_path / 'traces'), tmp_path / 'work')

    async def test_last_line_is_the_score(self, tmp_path):
        task = load_task_package(write_task(tmp_path, evaluator="printf 'loading\\n0.56\\n\\n'"))
        assert await self.orchestrator(tmp_path).run_evaluator(task, tmp_path) == Decimal('0.56')

    @pytest.mark.parametrize("command", ["echo not-a-number", "echo Infinity", "false", "true"])
    async def test_bad_evaluator_output(self, tmp_path, command):
        task = load_task_package(write_task(tmp_path, evaluator=command))
        with pytest.raises(EvaluatorFailed):
            await self.orchestrator(tmp_path).run_evaluator(task, tmp_path)

    async def test_missing_evaluator_binary(self, tmp_path):
        task = load_task_package(write_task(tmp_path, evaluator="no-such-evaluator-binary"))
        with pytest.raises(EvaluatorFailed):
            await self.orchestrator(tmp_path).run_evaluator(task, tmp_path)

    async def test_timeout(self, tmp_path):
        task_dir = write_task(tmp_path, evaluator="sleep 10")
        manifest = (task_dir / 'task.yaml').read_text(encoding='utf-8')
        (task_dir / 'task.yaml').write_text(manifest + "  timeout_s: 1\n", encoding='utf-8')
        task = load_task_package(task_dir)

        with pytest.raises(EvaluatorFailed):
            await self.orchestrator(tmp_path).run_evaluator(task, tmp_path)
