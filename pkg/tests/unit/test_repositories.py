"""
Repository tests
"""
from decimal import Decimal

import pytest

from app.models import EndpointKind, Observation, PlannerResponse, RunFooter, RunHeader, StepRecord
from app.repositories import (
    TaskRepository,
    TraceRepository,
    fill_placeholders,
    load_experiment_config,
    load_pricing_file,
    load_task_package,
    validate_task_package
)
from app.repositories.base import encode_line
from app.utils import ConfigurationError, EvaluatorFailed, OutputExists, TaskPackageInvalid, TraceCorrupt
from tests.conftest import write_task
from tests.factories import REPO_ROOT, TOY_TASK_DIR

HEADER = RunHeader(
    run_id="r1",
    task_id="tiny",
    config_hash="abc",
    prompt_template_version="planner-prompt/1",
    started_at="2024-03-01T00:00:00+00:00",
    run_config={}
)


def step(index: int) -> StepRecord:
    return StepRecord(
        index=index,
        planner_response=PlannerResponse(
            reflection="r", plan_and_status="p", fact_check="f", thought="t", action_name="List Files"
        ),
        action_name="List Files",
        observation=Observation(text="x", source_action="List Files")
    )


FOOTER = RunFooter(status="Completed", step_count=2, finished_at="2024-03-01T00:00:00+00:00")


def write_trace(path, lines: list[bytes]) -> None:
    path.write_bytes(b''.join(lines))


class TestTraceRepository:
    def test_round_trip(self, tmp_path):
        repository = TraceRepository(tmp_path / 'traces')
        path = repository.create(HEADER)
        repository.append(path, step(0))
        repository.append(path, step(1))
        repository.append(path, FOOTER)

        log = repository.load(path)

        assert log.header == HEADER
        assert len(log) == 2
        assert log.footer == FOOTER
        assert repository.list_traces() == [path]

    def test_lines_use_sorted_keys(self):
        line = encode_line(HEADER)
        assert line.endswith(b"\n")
        assert line.index(b'"config_hash"') < line.index(b'"run_id"')

    def test_refuses_to_overwrite(self, tmp_path):
        repository = TraceRepository(tmp_path)
        repository.create(HEADER)
        with pytest.raises(OutputExists):
            repository.create(HEADER)
        repository.create(HEADER, force=True)

    def test_corrupt_line_number(self, tmp_path):
        path = tmp_path / 'r1.jsonl'
        write_trace(path, [encode_line(HEADER), encode_line(step(0)), encode_line(step(1)), encode_line(step(2)), b'{"record_type": "step", oops\n'])

        with pytest.raises(TraceCorrupt) as exc_info:
            TraceRepository(tmp_path).load(path)

        assert exc_info.value.line_no == 5
        assert exc_info.value.details['line_no'] == 5

    def test_bad_header(self, tmp_path):
        path = tmp_path / 'r1.jsonl'
        write_trace(path, [b'not json\n'])
        with pytest.raises(TraceCorrupt) as exc_info:
            TraceRepository(tmp_path).load(path)
        assert exc_info.value.line_no == 1

    def test_index_gap_in_file(self, tmp_path):
        path = tmp_path / 'r1.jsonl'
        write_trace(path, [encode_line(HEADER), encode_line(step(0)), encode_line(step(2))])
        with pytest.raises(TraceCorrupt) as exc_info:
            TraceRepository(tmp_path).load(path)
        assert exc_info.value.line_no == 3

    def test_record_after_footer(self, tmp_path):
        path = tmp_path / 'r1.jsonl'
        write_trace(path, [encode_line(HEADER), encode_line(FOOTER), encode_line(step(0))])
        with pytest.raises(TraceCorrupt) as exc_info:
            TraceRepository(tmp_path).load(path)
        assert exc_info.value.line_no == 3

    def test_missing_footer_is_allowed(self, tmp_path):
        path = tmp_path / 'r1.jsonl'
        write_trace(path, [encode_line(HEADER), encode_line(step(0))])
        assert TraceRepository(tmp_path).load(path).footer is None

    def test_list_traces_missing_dir(self, tmp_path):
        assert TraceRepository(tmp_path / 'absent').list_traces() == []


class TestTaskPackage:
    def test_toy_task_loads_and_validates(self):
        task = load_task_package(TOY_TASK_DIR)

        assert task.id == 'toy-threshold'
        assert task.baseline_score == Decimal('0.6')
        assert task.seed_workspace.name == 'workspace'
        assert 'threshold' in task.description_text
        assert validate_task_package(TOY_TASK_DIR) == []

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(TaskPackageInvalid) as exc_info:
            load_task_package(tmp_path)
        assert exc_info.value.details['diagnostics'] == ["task.yaml: file not found"]

    def test_missing_field_reports_its_path(self, tmp_path):
        task_dir = write_task(tmp_path)
        (task_dir / 'task.yaml').write_text("id: tiny\nevaluator:\n  timeout_s: 5\n", encoding='utf-8')

        diagnostics = validate_task_package(task_dir)

        assert any(d.startswith("baseline_score:") for d in diagnostics)
        assert any(d.startswith("evaluator.command:") for d in diagnostics)

    def test_invalid_yaml(self, tmp_path):
        task_dir = write_task(tmp_path)
        (task_dir / 'task.yaml').write_text("id: [unclosed\n", encoding='utf-8')
        assert len(validate_task_package(task_dir)) == 1

    def test_missing_workspace(self, tmp_path):
        task_dir = write_task(tmp_path)
        (task_dir / 'workspace' / 'notes.txt').unlink()
        (task_dir / 'workspace').rmdir()

        diagnostics = validate_task_package(task_dir)

        assert diagnostics == ["workspace: seed workspace directory not found"]

    def test_zero_baseline_with_relative_improvement(self, tmp_path):
        task_dir = write_task(tmp_path, baseline="0")
        assert "baseline_score: must be nonzero for relative improvement" in validate_task_package(task_dir)

    def test_evaluator_not_found(self, tmp_path):
        task_dir = write_task(tmp_path, evaluator="no-such-evaluator-binary --score")
        assert validate_task_package(task_dir) == ["evaluator.command: 'no-such-evaluator-binary' not found"]

    def test_materialize_workspace(self, tmp_path):
        repository = TaskRepository(tmp_path)
        task = load_task_package(write_task(tmp_path))
        dest = tmp_path / 'runs' / 'r1'

        repository.materialize_workspace(task, dest)

        assert (dest / 'notes.txt').read_text(encoding='utf-8') == "seed\n"
        with pytest.raises(OutputExists):
            repository.materialize_workspace(task, dest)
        (dest / 'extra.txt').write_text("x", encoding='utf-8')
        repository.materialize_workspace(task, dest, force=True)
        assert not (dest / 'extra.txt').exists()

    def test_fill_placeholders_quotes_paths(self, tmp_path):
        task_dir = tmp_path / 'my task'
        argv = fill_placeholders("python3 {task_dir}/evaluate.py {workspace}", task_dir, tmp_path / 'ws 1')
        assert argv == ['python3', f"{task_dir}/evaluate.py", str(tmp_path / 'ws 1')]

    def test_fill_placeholders_keeps_other_braces(self, tmp_path):
        argv = fill_placeholders("awk 'BEGIN{print 0.9}' {workspace}/x", tmp_path, tmp_path / 'ws')
        assert argv == ['awk', 'BEGIN{print 0.9}', f"{tmp_path / 'ws'}/x"]

    def test_fill_placeholders_unbalanced_quote(self, tmp_path):
        with pytest.raises(EvaluatorFailed):
            fill_placeholders("echo '0.56", tmp_path, tmp_path)

    def test_unparseable_evaluator_is_a_diagnostic(self, tmp_path):
        task_dir = write_task(tmp_path, evaluator="echo '0.56")

        [diagnostic] = validate_task_package(task_dir)

        assert diagnostic.startswith("evaluator.command: cannot be parsed")


class TestExperimentConfig:
    def test_shipped_config_takes_prices_from_pricing_file(self):
        config = load_experiment_config(REPO_ROOT / 'config' / 'cascade.yaml')

        assert [t.id for t in config.cascade.tiers] == ['gemini-pro', 'gpt-3.5-turbo', 'gpt-4']
        assert config.cascade.expert_tier.id == 'gpt-4'
        assert config.models['gpt-4'].price_per_input_token == Decimal('0.00003')
        assert config.models['gpt-3.5-turbo'].price_per_output_token == Decimal('0.0000015')
        assert config.worker_model.id == 'gemini-pro'

    def test_pure_cascade_config(self):
        config = load_experiment_config(REPO_ROOT / 'config' / 'pure-cascade.yaml')
        assert config.cascade.expert_tier is None

    def test_scripted_golden_config(self):
        config = load_experiment_config(TOY_TASK_DIR / 'scripted.yaml')

        assert config.seed_label == 'golden'
        assert config.frozen_clock is not None
        assert all(m.endpoint.kind == EndpointKind.SCRIPTED for m in config.models.values())

    def test_overrides_win(self):
        config = load_experiment_config(
            REPO_ROOT / 'config' / 'cascade.yaml',
            overrides={'max_actions': 7, 'retrieval_enabled': False}
        )
        assert config.max_actions == 7
        assert config.retrieval_enabled is False

    def test_invalid_config_names_the_location(self, tmp_path):
        path = tmp_path / 'bad.yaml'
        path.write_text(
            "models:\n  - id: a\n  - id: b\ncascade:\n  repeat_threshold: 1\n",
            encoding='utf-8'
        )

        with pytest.raises(ConfigurationError) as exc_info:
            load_experiment_config(path)

        assert "cascade.repeat_threshold" in exc_info.value.message

    def test_tiers_out_of_price_order(self, tmp_path):
        path = tmp_path / 'bad.yaml'
        path.write_text(
            "models:\n"
            "  - id: pricey\n    price_per_input_token: '0.00003'\n"
            "  - id: cheap\n",
            encoding='utf-8'
        )
        with pytest.raises(ConfigurationError, match="non-decreasing"):
            load_experiment_config(path)

    def test_missing_pricing_file(self, tmp_path):
        path = tmp_path / 'c.yaml'
        path.write_text("models:\n  - id: a\npricing_file: absent.yaml\n", encoding='utf-8')
        with pytest.raises(ConfigurationError):
            load_experiment_config(path)

    def test_pricing_file(self):
        pricing = load_pricing_file(REPO_ROOT / 'config' / 'pricing.yaml')
        assert pricing.models['gpt-4-turbo'].price_per_input_token == Decimal('0.00001')
        assert pricing.as_of == '2024-03'
