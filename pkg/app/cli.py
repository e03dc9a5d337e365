"""
Command Line Interface
validate, run, report and trace commands
"""
import asyncio
import logging
import sys
from pathlib import Path
from typing import Any, NoReturn, Optional

import click
import orjson
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from app import __version__
from app.models import (
    BatchReport,
    ReportSummary,
    ResearchLog,
    RunStatus,
    StepRecord,
    format_money
)
from app.repositories import TraceRepository, TaskRepository, load_experiment_config
from app.services import ReportService, RunOrchestrator
from app.utils import (
    CascadeBenchException,
    ConfigurationError,
    EmptyRunSet,
    TraceCorrupt,
    setup_logging
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

REPORT_FILE = 'report.json'
COST_REPORT_FILE = 'cost_report.json'

_JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_NON_STR_KEYS


def write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(data, option=_JSON_OPTIONS) + b"\n")


def fail(message: str, code: int) -> NoReturn:
    click.echo(f"Error: {message}", err=True)
    sys.exit(code)


def cost_report_record(report: BatchReport) -> dict[str, Any]:
    """Machine-readable cost summary of a batch"""
    return {
        "task_id": report.task_id,
        "run_count": len(report.runs),
        "total_cost": str(report.total_cost),
        "average_cost_per_run": str(report.average_cost_per_run),
        "breakdown_by_model": {k: str(v) for k, v in report.breakdown_by_model.items()},
        "per_run": {r.run_id: str(r.cost_report.total) for r in report.runs},
        "notes": report.notes,
    }


def batch_table(report: BatchReport) -> Table:
    table = Table(title=f"{report.task_id}: {len(report.runs)} run(s)")
    table.add_column("run")
    table.add_column("status")
    table.add_column("steps", justify="right")
    table.add_column("score", justify="right")
    table.add_column("success")
    table.add_column("cost", justify="right")
    table.add_column("lifelines", justify="right")
    for run in report.runs:
        table.add_row(
            run.run_id,
            run.status.value,
            str(run.step_count),
            str(run.final_score) if run.final_score is not None else "-",
            "yes" if run.success else "no",
            format_money(run.cost_report.total),
            str(run.lifelines_used)
        )
    return table


def summary_table(summary: ReportSummary) -> Table:
    table = Table(title="Success rate and cost by task")
    table.add_column("task")
    table.add_column("runs", justify="right")
    table.add_column("success %", justify="right")
    table.add_column("avg $/run", justify="right")
    table.add_column("by model")
    table.add_column("escalations")
    table.add_column("lifelines used")
    for batch in summary.batches:
        table.add_row(
            batch.task_id,
            str(len(batch.runs)),
            str(batch.success_rate),
            format_money(batch.average_cost_per_run),
            ", ".join(f"{m}={format_money(c)}" for m, c in batch.breakdown_by_model.items()) or "-",
            ", ".join(f"{r}={n}" for r, n in batch.escalation_counts.items()) or "-",
            ", ".join(f"{k}:{n}" for k, n in batch.lifeline_histogram.items())
        )
    return table


def render_step(record: StepRecord) -> str:
    """Human-readable view of one step, escalations and observation included"""
    response = record.planner_response
    lines = [f"=== Step {record.index} ==="]
    for trace in record.escalation_trace:
        served = f"tier {trace.served_by_tier} ({trace.served_by_model})" if trace.served_by_model else "none"
        lines.append(f"[{trace.mode}] served by {served}")
        for attempt in trace.attempts:
            detail = f" {attempt.detail}" if attempt.detail else ""
            lines.append(
                f"  tier {attempt.tier_index} {attempt.model_id} attempt {attempt.attempt_no}: "
                f"{attempt.outcome.value}{detail}"
            )
        for transition in trace.transitions:
            lines.append(f"  escalated {transition.from_tier} -> {transition.to_tier}: {transition.reason.value}")
    if record.retrieved_context is not None and record.retrieved_context.summary:
        lines.append(f"Retrieved context: {record.retrieved_context.summary}")
    lines.extend([
        f"Research Plan and Status: {response.plan_and_status}",
        f"Thought: {response.thought}",
        f"Action: {record.action_name}",
        f"Action Input: {orjson.dumps(record.action_input, option=orjson.OPT_SORT_KEYS).decode()}",
        "Observation:",
        record.observation.text,
    ])
    return "\n".join(lines)


def render_footer(log: ResearchLog) -> str:
    footer = log.footer
    if footer is None:
        return "=== Run did not finish (no footer) ==="
    return "\n".join([
        "=== Result ===",
        f"status: {footer.status}",
        f"steps: {footer.step_count}",
        f"final score: {footer.final_score if footer.final_score is not None else '-'}",
        f"success: {'yes' if footer.success else 'no'}",
        f"lifelines used: {footer.lifelines_used}",
        f"total cost: {format_money(footer.total_cost)}",
    ] + ([f"annotation: {footer.annotation}"] if footer.annotation else []))


@click.group()
@click.version_option(__version__, prog_name='cascade-bench')
@click.option('-v', '--verbose', is_flag=True, help='Debug logging')
def cli(verbose: bool) -> None:
    """Cost-aware cascade agent runner and benchmark harness"""
    setup_logging(logging.DEBUG if verbose else None)


@cli.command()
@click.option('--task', 'task_dir', required=True, type=click.Path(path_type=Path), help='Task package directory')
def validate(task_dir: Path) -> None:
    """Check a task package without running it"""
    diagnostics = TaskRepository(task_dir.parent).validate_task_package(task_dir)
    if diagnostics:
        for line in diagnostics:
            click.echo(f"- {line}")
        sys.exit(EXIT_VALIDATION)
    click.echo(f"{task_dir}: OK")


@cli.command()
@click.option('--task', 'task_dir', required=True, type=click.Path(path_type=Path), help='Task package directory')
@click.option('--config', 'config_path', required=True, type=click.Path(path_type=Path), help='Experiment config file')
@click.option('--runs', default=1, show_default=True, type=click.IntRange(min=1), help='Number of runs')
@click.option('--parallelism', default=1, show_default=True, type=click.IntRange(min=1), help='Concurrent runs')
@click.option('--retrieval/--no-retrieval', default=None, help='Override retrieval (default: config file)')
@click.option('--max-actions', type=click.IntRange(min=1), default=None, help='Override the step budget')
@click.option('--out', 'out_dir', default=Path('out'), show_default=True, type=click.Path(path_type=Path))
@click.option('--force', is_flag=True, help='Overwrite existing outputs')
def run(
    task_dir: Path,
    config_path: Path,
    runs: int,
    parallelism: int,
    retrieval: Optional[bool],
    max_actions: Optional[int],
    out_dir: Path,
    force: bool
) -> None:
    """Run a task one or more times and write traces plus reports"""
    console = Console()
    task_repository = TaskRepository(task_dir.parent)
    try:
        task = task_repository.load_task_package(task_dir)
        config = load_experiment_config(
            config_path,
            overrides={"retrieval_enabled": retrieval, "max_actions": max_actions}
        )
        for name in (REPORT_FILE, COST_REPORT_FILE):
            task_repository.check_writable(out_dir / name, force)
    except ConfigurationError as e:
        for line in e.details.get('diagnostics', []):
            click.echo(f"- {line}", err=True)
        fail(e.message, EXIT_VALIDATION)

    orchestrator = RunOrchestrator(
        TraceRepository(out_dir / 'traces'),
        out_dir / 'workspaces',
        script_dir=config_path.parent,
        force=force
    )
    try:
        report = asyncio.run(orchestrator.run_batch(task, config, runs, parallelism))
    except ConfigurationError as e:
        fail(e.message, EXIT_VALIDATION)
    except CascadeBenchException as e:
        fail(e.message, EXIT_RUNTIME)

    write_json(out_dir / REPORT_FILE, report.dump())
    write_json(out_dir / COST_REPORT_FILE, cost_report_record(report))

    console.print(batch_table(report))
    console.print(
        f"success rate: {report.success_rate}%  average cost per run: "
        f"{format_money(report.average_cost_per_run)}",
        markup=False,
        highlight=False
    )
    for note in report.notes:
        console.print(f"note: {note}", markup=False, highlight=False)

    if all(r.status == RunStatus.ENV_FATAL for r in report.runs):
        sys.exit(EXIT_RUNTIME)


@cli.command()
@click.argument('trace_dir', type=click.Path(path_type=Path))
@click.option('--json', 'as_json', is_flag=True, help='Print the summary as JSON')
def report(trace_dir: Path, as_json: bool) -> None:
    """Recompute success rate and cost from a directory of traces"""
    try:
        summary = ReportService().summarize(trace_dir)
    except EmptyRunSet as e:
        fail(e.message, EXIT_VALIDATION)
    except TraceCorrupt as e:
        fail(f"{e.message} (line {e.line_no})", EXIT_VALIDATION)

    if as_json:
        click.echo(orjson.dumps(summary.dump(), option=_JSON_OPTIONS).decode())
        return

    console = Console()
    console.print(summary_table(summary))
    for run_id in summary.incomplete_runs:
        console.print(f"incomplete: {run_id}", markup=False, highlight=False)
    for run_id in summary.cost_mismatches:
        console.print(f"stored total differs from recomputed: {run_id}", markup=False, highlight=False)


@cli.command()
@click.argument('trace_file', type=click.Path(path_type=Path))
@click.option('--step', type=click.IntRange(min=0), default=None, help='Only print this step')
def trace(trace_file: Path, step: Optional[int]) -> None:
    """Pretty-print a run trace"""
    try:
        log = TraceRepository(trace_file.parent).load(trace_file)
    except TraceCorrupt as e:
        fail(f"{e.message} (line {e.line_no})", EXIT_VALIDATION)
    except OSError as e:
        fail(f"Cannot read {trace_file}: {e.strerror}", EXIT_VALIDATION)

    if step is not None:
        if step >= len(log):
            fail(f"Trace has {len(log)} step(s); no step {step}", EXIT_VALIDATION)
        click.echo(render_step(log.records[step]))
        return

    header = log.header
    Console().print(Panel(
        f"run {header.run_id}\ntask {header.task_id}\nconfig {header.config_hash}\n"
        f"prompt template {header.prompt_template_version}\nstarted {header.started_at}",
        title="trace"
    ), markup=False, highlight=False)
    for record in log.records:
        click.echo(render_step(record))
    click.echo(render_footer(log))


if __name__ == '__main__':
    cli()
