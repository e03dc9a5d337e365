"""
Action Models
Action registry entries, observations, per-action inputs and agent profiles
"""
from enum import Enum
from typing import Any, Optional
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .base import FrozenModel


class ActionName(str, Enum):
    """Names the planner uses to call actions"""
    LIST_FILES = "List Files"
    READ_FILE = "Read File"
    WRITE_FILE = "Write File"
    APPEND_FILE = "Append File"
    COPY_FILE = "Copy File"
    UNDO_EDIT_SCRIPT = "Undo Edit Script"
    EXECUTE_SCRIPT = "Execute Script"
    INSPECT_SCRIPT_LINES = "Inspect Script Lines"
    UNDERSTAND_FILE = "Understand File"
    EDIT_SCRIPT_AI = "Edit Script (AI)"
    REFLECTION = "Reflection"
    FINAL_ANSWER = "Final Answer"
    REQUEST_EXPERT = "Request Help from a Planning Expert"


class AgentProfiles(FrozenModel):
    """System prompts for the planner and the model-backed workers"""
    planner: str = "You are a planner for solving machine learning tasks."
    planning_expert: str = "You are an expert in planning for solving machine learning tasks."
    understand_file: str = (
        "You are an expert in understanding files containing both code and natural language."
    )
    edit_script: str = "You are an expert in editing code files."
    reflection: str = (
        "You are an expert in reflecting on previous actions when solving a machine learning task."
    )


class ActionKind(str, Enum):
    """Programmatic primitive or model-backed action"""
    LOW_LEVEL = "low_level"
    HIGH_LEVEL = "high_level"


class ArgumentSpec(FrozenModel):
    """One Action Input argument"""
    type: str
    required: bool
    description: str = ''


class ActionSpec(FrozenModel):
    """Documentation and schema of one registered action"""
    name: str
    description: str
    usage: str
    returns: str
    kind: ActionKind
    profile: Optional[str] = None
    input_schema: dict[str, ArgumentSpec] = Field(default_factory=dict)
    planner_visible: bool = True


class Observation(FrozenModel):
    """Textual result of an action"""
    text: str
    truncated: bool = False
    source_action: str
    exit_status: Optional[int] = None
    is_error: bool = False
    terminal: bool = False


# Action Input models. Field names are what the planner writes in its JSON.

class ActionInput(BaseModel):
    """Base for Action Input payloads"""
    model_config = ConfigDict(extra='forbid')


class ListFilesInput(ActionInput):
    dir_path: str = Field(default='.', description='a valid relative path to a directory, such as "." or "folder1/folder2"')


class ReadFileInput(ActionInput):
    file_name: str = Field(description='a valid file name with relative path to current directory if needed')


class WriteFileInput(ActionInput):
    file_name: str = Field(description='a valid file name with relative path to current directory if needed')
    content: str = Field(description='the content to be written to the file')


class AppendFileInput(ActionInput):
    file_name: str = Field(description='a valid file name with relative path to current directory if needed')
    content: str = Field(description='the content to be appended to the file')


class CopyFileInput(ActionInput):
    source: str = Field(description='a valid file name with relative path to current directory if needed')
    destination: str = Field(description='a valid file name with relative path to current directory if needed')
    overwrite: bool = Field(default=False, description='replace the destination if it exists')


class UndoEditScriptInput(ActionInput):
    script_name: str = Field(description='a valid python script name with relative path to current directory if needed')


class ExecuteScriptInput(ActionInput):
    script_name: str = Field(description='a valid python script name with relative path to current directory if needed')


class InspectScriptLinesInput(ActionInput):
    script_name: str = Field(description='a valid python script name with relative path to current directory if needed')
    start_line_number: int = Field(description='a valid line number')
    end_line_number: int = Field(description='a valid line number')


class UnderstandFileInput(ActionInput):
    file_name: str = Field(description='a valid file name with relative path to current directory if needed')
    things_to_look_for: str = Field(description='a detailed description on what to look for and what should returned')


class EditScriptInput(ActionInput):
    script_name: str = Field(description='a valid python script name with relative path to current directory if needed. An empty script will be created if it does not exist.')
    edit_instruction: str = Field(description='a detailed step by step description on how to edit it.')
    save_name: str = Field(description='a valid file name with relative path to current directory if needed')
    start_line_number: Optional[int] = Field(default=None, description='optional first line of the segment to edit')
    end_line_number: Optional[int] = Field(default=None, description='optional last line of the segment to edit')

    @model_validator(mode='after')
    def segment_bounds_together(self) -> 'EditScriptInput':
        if (self.start_line_number is None) != (self.end_line_number is None):
            raise ValueError('start_line_number and end_line_number must be given together')
        return self


class ReflectionInput(ActionInput):
    things_to_reflect_on: str = Field(description='a detailed description on what to reflect on and what should be returned')


class FinalAnswerInput(ActionInput):
    final_answer: str = Field(default='', description='a detailed description on the final answer')


class RequestExpertInput(ActionInput):
    question: str = Field(description='what you are stuck on and what kind of help you need')


_JSON_TYPES = {str: 'string', int: 'integer', bool: 'boolean', float: 'number'}


def schema_of(model: type[ActionInput]) -> dict[str, ArgumentSpec]:
    """Derive the documented input schema from an Action Input model"""
    schema: dict[str, ArgumentSpec] = {}
    for name, field in model.model_fields.items():
        annotation: Any = field.annotation
        args = getattr(annotation, '__args__', ())
        if args:
            annotation = next((a for a in args if a is not type(None)), str)
        schema[name] = ArgumentSpec(
            type=_JSON_TYPES.get(annotation, 'string'),
            required=field.is_required(),
            description=field.description or ''
        )
    return schema


def usage_for(name: str, model: type[ActionInput]) -> str:
    """Usage block shown to the planner, e.g. Action: ... / Action Input: {...}"""
    entries = []
    for field, arg in schema_of(model).items():
        optional = ' (optional)' if not arg.required else ''
        entries.append(f'    "{field}": [{arg.type}: {arg.description}]{optional}')
    body = ',\n'.join(entries)
    if not body:
        return f"Action: {name}\nAction Input: {{}}"
    return f"Action: {name}\nAction Input: {{\n{body}\n}}"
