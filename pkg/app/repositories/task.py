"""
Task Repository
Task package directories and experiment config files
"""
import re
import shlex
import shutil
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import ValidationError

from app.models import (
    ExperimentConfig,
    ImprovementMode,
    PricingFile,
    RunConfig,
    TaskManifest,
    TaskPackage
)
from app.utils import ConfigurationError, EvaluatorFailed, TaskPackageInvalid
from .base import BaseRepository

MANIFEST_FILE = 'task.yaml'


def format_validation_error(error: ValidationError) -> list[str]:
    """One line per error, prefixed with its location path (e.g. cascade.tiers.1)"""
    lines = []
    for item in error.errors():
        loc = '.'.join(str(p) for p in item['loc']) or '<root>'
        lines.append(f"{loc}: {item['msg']}")
    return lines


def read_yaml(path: Path) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return yaml.safe_load(f)
    except OSError as e:
        raise ConfigurationError(f"Cannot read {path}: {e.strerror}", details={"path": str(path)}) from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Invalid YAML in {path}: {e}", details={"path": str(path)}) from e


_PLACEHOLDER_RE = re.compile(r"\{(task_dir|workspace)\}")


def fill_placeholders(command: str, task_dir: Path, workspace: Path) -> list[str]:
    """
    Split an evaluator command, substituting {task_dir} and {workspace}

    Other braces are left as they are (awk programs, shell groups).

    Raises:
        EvaluatorFailed: The command cannot be split (unbalanced quotes)
    """
    values = {
        'task_dir': shlex.quote(str(task_dir)),
        'workspace': shlex.quote(str(workspace)),
    }
    filled = _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], command)
    try:
        return shlex.split(filled)
    except ValueError as e:
        raise EvaluatorFailed(
            f"Evaluator command cannot be parsed: {e}",
            details={"command": command}
        ) from e

class TaskRepository(BaseRepository):
    """
    Loads task packages from directories under root

    Layout of a package: task.yaml (manifest), description file,
    workspace/ seed directory.
    """

    def package_dir(self, task: str) -> Path:
        """Accept a task id under root or a path to a package directory"""
        path = Path(task)
        if path.is_dir():
            return path
        return self.path_for(task)

    def load_task_package(self, task_dir: Path) -> TaskPackage:
        """
        Load and validate a task package

        Raises:
            TaskPackageInvalid: Manifest missing or invalid, description or
                workspace missing
        """
        task_dir = Path(task_dir)
        manifest_path = task_dir / MANIFEST_FILE
        if not manifest_path.is_file():
            raise TaskPackageInvalid(
                f"{manifest_path} not found",
                details={"diagnostics": [f"{MANIFEST_FILE}: file not found"]}
            )

        try:
            data = read_yaml(manifest_path)
        except ConfigurationError as e:
            raise TaskPackageInvalid(e.message, details={"diagnostics": [e.message]}) from e
        if not isinstance(data, dict):
            raise TaskPackageInvalid(
                f"{manifest_path} must hold a mapping",
                details={"diagnostics": [f"{MANIFEST_FILE}: expected a mapping"]}
            )

        try:
            manifest = TaskManifest.model_validate(data)
        except ValidationError as e:
            diagnostics = format_validation_error(e)
            raise TaskPackageInvalid(
                f"Invalid {MANIFEST_FILE}: {'; '.join(diagnostics)}",
                details={"diagnostics": diagnostics}
            ) from e

        description_path = task_dir / manifest.description_file
        seed = task_dir / manifest.workspace_dir
        diagnostics = []
        if not description_path.is_file():
            diagnostics.append(f"{manifest.description_file}: file not found")
        if not seed.is_dir():
            diagnostics.append(f"{manifest.workspace_dir}: seed workspace directory not found")
        if diagnostics:
            raise TaskPackageInvalid(
                f"Invalid task package {task_dir}: {'; '.join(diagnostics)}",
                details={"diagnostics": diagnostics}
            )

        return TaskPackage(
            manifest=manifest,
            description_text=description_path.read_text(encoding='utf-8'),
            root_dir=task_dir.resolve(),
            seed_workspace=seed.resolve()
        )

    def validate_task_package(self, task_dir: Path) -> list[str]:
        """
        Check a package without running it

        Covers manifest completeness, a usable baseline and whether the
        evaluator and interpreter commands can be found.

        Returns:
            list[str]: Diagnostics; empty when the package is valid
        """
        try:
            task = self.load_task_package(task_dir)
        except TaskPackageInvalid as e:
            return list(e.details.get('diagnostics', [e.message]))

        diagnostics = []
        if task.improvement_mode == ImprovementMode.RELATIVE and task.baseline_score == 0:
            diagnostics.append("baseline_score: must be nonzero for relative improvement")

        try:
            argv = fill_placeholders(task.evaluator.command, task.root_dir, task.seed_workspace)
        except EvaluatorFailed as e:
            diagnostics.append(f"evaluator.command: cannot be parsed ({e.message})")
        else:
            if not argv:
                diagnostics.append("evaluator.command: empty command")
            elif shutil.which(argv[0]) is None and not (task.root_dir / argv[0]).is_file():
                diagnostics.append(f"evaluator.command: '{argv[0]}' not found")

        interpreter = shlex.split(task.interpreter_command)
        if not interpreter or shutil.which(interpreter[0]) is None:
            diagnostics.append(f"interpreter_command: '{task.interpreter_command}' not found")

        for line in diagnostics:
            self.logger.info("task_package_diagnostic", task_id=task.id, diagnostic=line)
        return diagnostics

    def materialize_workspace(self, task: TaskPackage, dest: Path, force: bool = False) -> Path:
        """
        Copy the seed workspace to a fresh directory

        Raises:
            OutputExists: dest exists and force is not set
        """
        self.check_writable(dest, force)
        if dest.exists():
            shutil.rmtree(dest)
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copytree(task.seed_workspace, dest, symlinks=True)
        return dest


def load_pricing_file(path: Path) -> PricingFile:
    """
    Load a pricing file (model id -> per-token prices)

    Raises:
        ConfigurationError: Unreadable or invalid file
    """
    data = read_yaml(path)
    try:
        return PricingFile.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(
            f"Invalid pricing file {path}: {'; '.join(format_validation_error(e))}",
            details={"diagnostics": format_validation_error(e)}
        ) from e


def load_experiment_config(path: Path, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """
    Load an experiment config file into an effective run configuration

    Precedence: overrides, then file values, then defaults. A pricing file
    named in the config is resolved relative to the config file.

    Args:
        path: YAML experiment config
        overrides: Run-section overrides (None values are ignored)

    Returns:
        RunConfig: Effective configuration

    Raises:
        ConfigurationError: With pydantic location paths in the message
    """
    path = Path(path)
    data = read_yaml(path)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must hold a mapping", details={"path": str(path)})

    try:
        experiment = ExperimentConfig.model_validate(data).with_overrides(**(overrides or {}))
    except ValidationError as e:
        diagnostics = format_validation_error(e)
        raise ConfigurationError(
            f"Invalid config {path}: {'; '.join(diagnostics)}",
            details={"diagnostics": diagnostics}
        ) from e

    pricing = None
    if experiment.pricing_file:
        pricing_path = Path(experiment.pricing_file)
        if not pricing_path.is_absolute():
            pricing_path = path.parent / pricing_path
        pricing = load_pricing_file(pricing_path)

    try:
        return experiment.to_run_config(pricing)
    except ValidationError as e:
        diagnostics = format_validation_error(e)
        raise ConfigurationError(
            f"Invalid config {path}: {'; '.join(diagnostics)}",
            details={"diagnostics": diagnostics}
        ) from e


def load_task_package(task_dir: Path) -> TaskPackage:
    """Load a task package directory"""
    task_dir = Path(task_dir)
    return TaskRepository(task_dir.parent).load_task_package(task_dir)


def validate_task_package(task_dir: Path) -> list[str]:
    """Diagnostics for a task package directory; empty when valid"""
    task_dir = Path(task_dir)
    return TaskRepository(task_dir.parent).validate_task_package(task_dir)
