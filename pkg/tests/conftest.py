"""
Shared pytest fixtures
"""
import json
import shutil
from pathlib import Path

import pytest

from app.models import TaskPackage
from app.repositories import TraceRepository, load_task_package
from app.services import RunOrchestrator
from app.services.cost_ledger import CostLedger
from tests.factories import TOY_TASK_DIR, ScriptedGateways


def write_task(root: Path, evaluator: str = "echo 0.56", baseline: str = "0.50") -> Path:
    """Minimal task package whose evaluator prints a fixed score"""
    task_dir = root / 'task'
    (task_dir / 'workspace').mkdir(parents=True)
    (task_dir / 'workspace' / 'notes.txt').write_text("seed\n", encoding='utf-8')
    (task_dir / 'description.txt').write_text("Improve the score.\n", encoding='utf-8')
    (task_dir / 'task.yaml').write_text(
        "id: tiny\n"
        f"baseline_score: \"{baseline}\"\n"
        "evaluator:\n"
        f"  command: {json.dumps(evaluator)}\n",
        encoding='utf-8'
    )
    return task_dir


@pytest.fixture
def ledger() -> CostLedger:
    return CostLedger("test-run")


@pytest.fixture
def tiny_task(tmp_path) -> TaskPackage:
    return load_task_package(write_task(tmp_path))


@pytest.fixture
def toy_task_dir(tmp_path) -> Path:
    """Copy of the shipped toy task"""
    dest = tmp_path / 'toy-threshold'
    shutil.copytree(TOY_TASK_DIR, dest)
    return dest


@pytest.fixture
def toy_task(toy_task_dir) -> TaskPackage:
    return load_task_package(toy_task_dir)


@pytest.fixture
def make_orchestrator(tmp_path):
    """Orchestrator writing under tmp_path/out with scripted gateways"""
    def factory(scripts: dict[str, list[str]], out: str = 'out') -> tuple[RunOrchestrator, ScriptedGateways]:
        gateways = ScriptedGateways(scripts)
        orchestrator = RunOrchestrator(
            TraceRepository(tmp_path / out / 'traces'),
            tmp_path / out / 'workspaces',
            gateway_factory=gateways
        )
        return orchestrator, gateways

    return factory
