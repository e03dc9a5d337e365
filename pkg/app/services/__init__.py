"""
Services Package
Business logic exports
"""
from .gateway_service import ModelGateway, ScriptedBackend, RemoteBackend, script_backend, load_script_file
from .cost_ledger import CostLedger, cost_of, aggregate, aggregate_runs
from .response_grammar import (
    parse_planner_response,
    render_planner_response,
    render_planner_prompt,
    canonical_action_input,
)
from .cascade_service import CascadeRouter, EXPERT_ACTION, detect_repeat, available_planner_actions
from .environment_service import ActionEnvironment, Workspace, truncate_observation
from .memory_service import ResearchLogWriter, RetrievalService, recent_window
from .orchestrator_service import RunOrchestrator, evaluate_success, success_rate, summarize_batch
from .report_service import ReportService

__all__ = [
    'ModelGateway',
    'ScriptedBackend',
    'RemoteBackend',
    'script_backend',
    'load_script_file',
    'CostLedger',
    'cost_of',
    'aggregate',
    'aggregate_runs',
    'parse_planner_response',
    'render_planner_response',
    'render_planner_prompt',
    'canonical_action_input',
    'CascadeRouter',
    'EXPERT_ACTION',
    'detect_repeat',
    'available_planner_actions',
    'ActionEnvironment',
    'Workspace',
    'truncate_observation',
    'ResearchLogWriter',
    'RetrievalService',
    'recent_window',
    'RunOrchestrator',
    'evaluate_success',
    'success_rate',
    'summarize_batch',
    'ReportService',
]
