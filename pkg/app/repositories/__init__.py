"""
Repositories Package
File-backed storage exports
"""
from .base import BaseRepository, encode_line, decode_line
from .trace import TraceRepository
from .task import (
    TaskRepository,
    load_experiment_config,
    load_pricing_file,
    load_task_package,
    validate_task_package,
    fill_placeholders,
)

__all__ = [
    'BaseRepository',
    'encode_line',
    'decode_line',
    'TraceRepository',
    'TaskRepository',
    'load_experiment_config',
    'load_pricing_file',
    'load_task_package',
    'validate_task_package',
    'fill_placeholders',
]
