"""
Action Environment Service
Sandboxed task workspace and the registry of planner-callable actions

All filesystem access goes through the module-level helpers below, and only
ever with paths that passed Workspace.resolve().
"""
import asyncio
import difflib
import math
import os
import re
import shlex
import signal
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Awaitable, Callable, Optional, Sequence

from pydantic import ValidationError

from app.config import settings
from app.models import (
    ActionKind,
    ActionName,
    ActionSpec,
    AgentProfiles,
    CompletionRequest,
    ModelDescriptor,
    Observation,
    ParseFailure,
    ParseFailureKind,
    StepRecord,
    UsagePurpose,
    schema_of,
    usage_for
)
from app.models.action import (
    ActionInput,
    AppendFileInput,
    CopyFileInput,
    EditScriptInput,
    ExecuteScriptInput,
    FinalAnswerInput,
    InspectScriptLinesInput,
    ListFilesInput,
    ReadFileInput,
    ReflectionInput,
    UnderstandFileInput,
    UndoEditScriptInput,
    WriteFileInput
)
from app.services.cost_ledger import CostLedger
from app.services.gateway_service import ModelGateway
from app.services.response_grammar import NO_STEPS_MARKER, render_step_summary
from app.utils import (
    ActionError,
    CredentialsMissing,
    EnvironmentClosed,
    FileNotFound,
    GatewayError,
    InvalidRange,
    LoggerMixin,
    NotADirectory,
    NothingToUndo,
    OverwriteRefused,
    PathEscapesSandbox,
    ScriptExhausted,
    ScriptTimeout,
    SpawnFailure
)

TRUNCATION_MARKER = "\n\n[... observation truncated ...]\n\n"
TIMEOUT_MARKER = "\n[script timed out and was killed]"
ERROR_MARKER = "[error]"

_FENCED_CODE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


# Filesystem helpers

def _read_bytes(path: Path) -> bytes:
    with open(path, 'rb') as f:
        return f.read()


def _write_atomic(path: Path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over the target"""
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _list_dir(path: Path) -> list[tuple[str, bool]]:
    """(name, is_dir) without following symlinks"""
    with os.scandir(path) as entries:
        return [(e.name, e.is_dir(follow_symlinks=False)) for e in entries]


def _remove(path: Path) -> None:
    os.unlink(path)


def _make_dirs(path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)


def _is_file(path: Path) -> bool:
    return path.is_file()


def _is_dir(path: Path) -> bool:
    return path.is_dir()


def kill_process_group(process: asyncio.subprocess.Process) -> None:
    """SIGKILL the session a child was started in, grandchildren included"""
    try:
        os.killpg(process.pid, signal.SIGKILL)
    except ProcessLookupError:
        pass


def truncate_observation(text: str, cap: Optional[int] = None) -> tuple[str, bool]:
    """
    Clip text to cap characters keeping head and tail around a marker

    Returns:
        tuple: (text, truncated flag)
    """
    cap = cap or settings.environment.observation_cap
    if len(text) <= cap:
        return text, False
    room = cap - len(TRUNCATION_MARKER)
    head = room // 2
    tail = room - head
    return text[:head] + TRUNCATION_MARKER + (text[-tail:] if tail > 0 else ''), True


def extract_code(reply: str) -> str:
    """Code from the first fenced block, or the whole reply when there is none"""
    match = _FENCED_CODE_RE.search(reply)
    return match.group(1) if match else reply


class Workspace(LoggerMixin):
    """
    A task workspace rooted at one directory

    Paths are relative to root. Anything resolving outside root (.., absolute
    paths, symlinks pointing out, NUL bytes) is rejected before any access.
    Backup stacks hold prior contents of AI-edited files; None marks a file
    that did not exist, so undoing that edit deletes it.
    """

    def __init__(self, root: Path):
        self.root = Path(root).resolve()
        self.backup_stacks: dict[str, list[Optional[bytes]]] = {}

    def resolve(self, rel_path: str) -> Path:
        """
        Resolve a workspace-relative path

        Raises:
            PathEscapesSandbox: Path is absolute or leaves root
        """
        if not isinstance(rel_path, str) or '\x00' in rel_path:
            raise PathEscapesSandbox(f"Invalid path {rel_path!r}")
        if os.path.isabs(rel_path) or rel_path.startswith(('/', '\\', '~')):
            raise PathEscapesSandbox(f"Absolute paths are not allowed: {rel_path}")

        lexical = Path(os.path.normpath(os.path.join(self.root, rel_path)))
        if lexical != self.root and self.root not in lexical.parents:
            raise PathEscapesSandbox(f"Path leaves the workspace: {rel_path}")

        resolved = lexical.resolve()
        if resolved != self.root and self.root not in resolved.parents:
            raise PathEscapesSandbox(f"Path leaves the workspace through a link: {rel_path}")
        return resolved

    def relative(self, path: Path) -> str:
        """Workspace-relative posix name"""
        rel = path.relative_to(self.root).as_posix()
        return rel or '.'

    def read_text(self, rel_path: str) -> str:
        path = self.resolve(rel_path)
        if not _is_file(path):
            raise FileNotFound(f"File {rel_path} does not exist")
        return _read_bytes(path).decode('utf-8', errors='replace')

    def write_bytes(self, rel_path: str, data: bytes) -> Path:
        path = self.resolve(rel_path)
        if path == self.root or _is_dir(path):
            raise FileNotFound(f"{rel_path} is a directory")
        if not _is_dir(path.parent):
            _make_dirs(path.parent)
        _write_atomic(path, data)
        return path

    def push_backup(self, rel_path: str) -> None:
        """Snapshot the current content of a file onto its backup stack"""
        path = self.resolve(rel_path)
        key = self.relative(path)
        snapshot = _read_bytes(path) if _is_file(path) else None
        self.backup_stacks.setdefault(key, []).append(snapshot)

    def backup_depth(self, rel_path: str) -> int:
        return len(self.backup_stacks.get(self.relative(self.resolve(rel_path)), []))

    def undo(self, rel_path: str) -> Optional[bytes]:
        """
        Restore the top-of-stack snapshot

        Returns:
            Optional[bytes]: Restored content, None when the file was removed

        Raises:
            NothingToUndo: No recorded edit for the file
        """
        path = self.resolve(rel_path)
        key = self.relative(path)
        stack = self.backup_stacks.get(key)
        if not stack:
            raise NothingToUndo(f"There is no change to undo for {rel_path}")
        snapshot = stack.pop()
        if snapshot is None:
            if _is_file(path):
                _remove(path)
        else:
            _write_atomic(path, snapshot)
        return snapshot


Handler = Callable[[Any], Awaitable[Observation]]


@dataclass(frozen=True)
class RegisteredAction:
    """Registry entry: documentation, input model and handler"""
    spec: ActionSpec
    input_model: type[ActionInput]
    handler: Handler


class ActionEnvironment(LoggerMixin):
    """
    Executes planner actions against one workspace

    Low-level actions are programmatic. High-level actions with a profile
    make worker model calls through the gateway; their usage lands in the
    run's ledger tagged worker_action.
    """

    def __init__(
        self,
        workspace: Workspace,
        gateway: ModelGateway,
        ledger: CostLedger,
        worker_model: ModelDescriptor,
        profiles: Optional[AgentProfiles] = None,
        interpreter_command: str = 'python3',
        execute_timeout_s: Optional[int] = None,
        worker_temperature: float = 0.01,
        observation_cap: Optional[int] = None,
        understand_chunk_chars: Optional[int] = None,
        passthrough_vars: Optional[Sequence[str]] = None,
        log_source: Optional[Callable[[], Sequence[StepRecord]]] = None
    ):
        self.workspace = workspace
        self.gateway = gateway
        self.ledger = ledger
        self.worker_model = worker_model
        self.profiles = profiles or AgentProfiles()
        self.interpreter_command = interpreter_command
        self.execute_timeout_s = execute_timeout_s or settings.environment.execute_timeout_s
        self.worker_temperature = worker_temperature
        self.observation_cap = observation_cap or settings.environment.observation_cap
        self.understand_chunk_chars = understand_chunk_chars or settings.environment.understand_chunk_chars
        self.passthrough_vars = (
            list(passthrough_vars) if passthrough_vars is not None
            else settings.environment.get_passthrough_vars_list()
        )
        self.log_source = log_source or (lambda: [])
        self.finished = False
        self._registry = self._build_registry()

    # Registry

    def _register(
        self,
        name: ActionName,
        input_model: type[ActionInput],
        handler: Handler,
        description: str,
        returns: str,
        kind: ActionKind,
        profile: Optional[str] = None,
        planner_visible: bool = True
    ) -> RegisteredAction:
        spec = ActionSpec(
            name=name.value,
            description=description,
            usage=usage_for(name.value, input_model),
            returns=returns,
            kind=kind,
            profile=profile,
            input_schema=schema_of(input_model),
            planner_visible=planner_visible
        )
        return RegisteredAction(spec=spec, input_model=input_model, handler=handler)

    def _build_registry(self) -> dict[str, RegisteredAction]:
        low, high = ActionKind.LOW_LEVEL, ActionKind.HIGH_LEVEL
        entries = [
            self._register(
                ActionName.LIST_FILES, ListFilesInput,
                lambda i: self.list_files(i.dir_path),
                "Use this to navigate the file system.",
                "The observation will be a list of files and folders in dir_path or current "
                "directory if dir_path is not provided, or an error message if dir_path is invalid.",
                low
            ),
            self._register(
                ActionName.READ_FILE, ReadFileInput,
                lambda i: self.read_file(i.file_name),
                "Use this to read an existing file.",
                "The observation will be the contents of the file read.",
                low, planner_visible=False
            ),
            self._register(
                ActionName.WRITE_FILE, WriteFileInput,
                lambda i: self.write_file(i.file_name, i.content),
                "Use this to write a file. If the file already exists, it will be overwritten.",
                "A success message if the file is written successfully, or an error message otherwise.",
                low, planner_visible=False
            ),
            self._register(
                ActionName.APPEND_FILE, AppendFileInput,
                lambda i: self.append_file(i.file_name, i.content),
                "Use this to append content to the end of a file, creating the file if it does not exist.",
                "A success message if the file is appended successfully, or an error message otherwise.",
                low, planner_visible=False
            ),
            self._register(
                ActionName.COPY_FILE, CopyFileInput,
                lambda i: self.copy_file(i.source, i.destination, i.overwrite),
                "Use this to copy a file to a new location with a new name.",
                "A success message if the file is copied successfully, or an error message otherwise.",
                low
            ),
            self._register(
                ActionName.UNDO_EDIT_SCRIPT, UndoEditScriptInput,
                lambda i: self.undo_edit_script(i.script_name),
                "Use this to undo the last edit of the python script.",
                "The observation will be the content of the script before the last edit. "
                "If the script does not exist, the observation will be an error message.",
                low
            ),
            self._register(
                ActionName.EXECUTE_SCRIPT, ExecuteScriptInput,
                lambda i: self.execute_script(i.script_name),
                "Use this to execute the python script. The script must already exist.",
                "The observation will be output of the script or errors.",
                low
            ),
            self._register(
                ActionName.FINAL_ANSWER, FinalAnswerInput,
                lambda i: self.final_answer(i.final_answer),
                "Use this to provide the final answer to the current task.",
                "The observation will be empty.",
                low
            ),
            self._register(
                ActionName.UNDERSTAND_FILE, UnderstandFileInput,
                lambda i: self.understand_file(i.file_name, i.things_to_look_for),
                "Use this to read the whole file and understand certain aspects. You should provide "
                "detailed description on what to look for and what should be returned.",
                "The observation will be a description of relevant content and lines in the file. "
                "If the file does not exist, the observation will be an error message.",
                high, profile=self.profiles.understand_file
            ),
            self._register(
                ActionName.INSPECT_SCRIPT_LINES, InspectScriptLinesInput,
                lambda i: self.inspect_script_lines(i.script_name, i.start_line_number, i.end_line_number),
                "Use this to inspect specific part of a python script precisely.",
                "The observation will be the content of the script between start_line_number and "
                "end_line_number, with line numbers. If the script does not exist, the observation "
                "will be an error message.",
                high
            ),
            self._register(
                ActionName.EDIT_SCRIPT_AI, EditScriptInput,
                lambda i: self.edit_script_ai(
                    i.script_name, i.edit_instruction, i.save_name,
                    i.start_line_number, i.end_line_number
                ),
                "Use this to do a relatively large but cohesive edit over a python script, or over "
                "a segment of it when start_line_number and end_line_number are given. Instead of "
                "editing the script directly, you should describe the edit instruction so that "
                "another AI can help you do this.",
                "The observation will be the edited content of the script. If the script does not "
                "exist, the observation will be an error message. You should always double check "
                "whether the edit is correct. If it is far from correct, you can use the Undo Edit "
                "Script action to undo the edit.",
                high, profile=self.profiles.edit_script
            ),
            self._register(
                ActionName.REFLECTION, ReflectionInput,
                lambda i: self.reflection(i.things_to_reflect_on, self.log_source()),
                "Use this to look over all the past steps and reflect. You should provide detailed "
                "description on what to reflect on and what should be returned.",
                "The observation will be the reflection.",
                high, profile=self.profiles.reflection
            ),
        ]
        return {entry.spec.name: entry for entry in entries}

    def specs(self, planner_visible_only: bool = True) -> list[ActionSpec]:
        """Registered action documentation, in registry order"""
        return [
            e.spec for e in self._registry.values()
            if e.spec.planner_visible or not planner_visible_only
        ]

    def action_names(self, planner_visible_only: bool = True) -> list[str]:
        return [s.name for s in self.specs(planner_visible_only)]

    def validate_input(self, name: str, action_input: dict[str, Any]) -> Optional[ParseFailure]:
        """
        Check an Action Input against the action's input model

        Returns:
            Optional[ParseFailure]: None when valid
        """
        entry = self._registry.get(name)
        if entry is None:
            return ParseFailure(kind=ParseFailureKind.UNKNOWN_ACTION, detail=f"unknown action '{name}'", offending_text=name)
        try:
            entry.input_model.model_validate(action_input)
        except ValidationError as e:
            return ParseFailure(
                kind=ParseFailureKind.MALFORMED_ACTION_INPUT,
                detail=f"invalid input for '{name}': {_validation_summary(e)}",
                offending_text=str(action_input)[:2000]
            )
        return None

    async def dispatch(self, name: str, action_input: dict[str, Any]) -> Observation:
        """
        Run one action

        Action errors come back as error Observations so the planner can
        react. Anything else propagates and ends the run.

        Raises:
            EnvironmentClosed: Final Answer was already declared
        """
        if self.finished:
            raise EnvironmentClosed("Final Answer was already declared; no further actions are accepted")
        entry = self._registry.get(name)
        if entry is None:
            return self._observe(f"EnvError: unknown action '{name}'", name, is_error=True)

        try:
            parsed = entry.input_model.model_validate(action_input)
        except ValidationError as e:
            return self._observe(f"EnvError: invalid Action Input: {_validation_summary(e)}", name, is_error=True)

        try:
            observation = await entry.handler(parsed)
        except ScriptTimeout as e:
            observation = self._observe(e.partial_output + TIMEOUT_MARKER, name, is_error=True)
        except ActionError as e:
            self.logger.info("action_failed", action=name, error_code=e.error_code, error=e.message)
            observation = self._observe(f"EnvError: {e.message}", name, is_error=True)

        self.logger.debug("action_dispatched", action=name, truncated=observation.truncated)
        return observation

    def _observe(
        self,
        text: str,
        source_action: str,
        exit_status: Optional[int] = None,
        is_error: bool = False,
        terminal: bool = False
    ) -> Observation:
        text, truncated = truncate_observation(text, self.observation_cap)
        return Observation(
            text=text,
            truncated=truncated,
            source_action=source_action,
            exit_status=exit_status,
            is_error=is_error,
            terminal=terminal
        )

    async def _worker_call(self, profile: str, prompt: str) -> str:
        result = await self.gateway.complete(
            self.worker_model,
            CompletionRequest(
                profile=profile,
                prompt=prompt,
                temperature=self.worker_temperature,
                purpose=UsagePurpose.WORKER_ACTION
            ),
            ledger=self.ledger
        )
        return result.text

    def _gateway_error_observation(self, error: GatewayError, source_action: str) -> Observation:
        if isinstance(error, (ScriptExhausted, CredentialsMissing)):
            raise error
        self.logger.warning("worker_call_failed", action=source_action, error=error.message)
        return self._observe(f"{ERROR_MARKER} worker model call failed: {error.message}", source_action, is_error=True)

    # Low-level actions

    async def list_files(self, dir_path: str = '.') -> Observation:
        path = self.workspace.resolve(dir_path)
        if not _is_dir(path):
            raise NotADirectory(f"Cannot list {dir_path}: not a directory")
        entries = sorted(_list_dir(path))
        listing = '\n'.join(f"{name}/" if is_dir else name for name, is_dir in entries)
        return self._observe(listing, ActionName.LIST_FILES.value)

    async def read_file(self, file_name: str) -> Observation:
        return self._observe(self.workspace.read_text(file_name), ActionName.READ_FILE.value)

    async def write_file(self, file_name: str, content: str) -> Observation:
        self.workspace.write_bytes(file_name, content.encode('utf-8'))
        return self._observe(f"File {file_name} written successfully.", ActionName.WRITE_FILE.value)

    async def append_file(self, file_name: str, content: str) -> Observation:
        path = self.workspace.resolve(file_name)
        existing = _read_bytes(path) if _is_file(path) else b''
        self.workspace.write_bytes(file_name, existing + content.encode('utf-8'))
        return self._observe(f"File {file_name} appended successfully.", ActionName.APPEND_FILE.value)

    async def copy_file(self, source: str, destination: str, overwrite: bool = False) -> Observation:
        src = self.workspace.resolve(source)
        dst = self.workspace.resolve(destination)
        if not _is_file(src):
            raise FileNotFound(f"File {source} does not exist")
        if _is_file(dst) and not overwrite:
            raise OverwriteRefused(f"{destination} already exists; set overwrite to true to replace it")
        self.workspace.write_bytes(destination, _read_bytes(src))
        return self._observe(f"File {source} copied to {destination}", ActionName.COPY_FILE.value)

    async def undo_edit_script(self, script_name: str) -> Observation:
        restored = self.workspace.undo(script_name)
        if restored is None:
            text = f"Undid the creation of {script_name}; the file no longer exists."
        else:
            text = (
                f"Content of {script_name} after undo the most recent edit:\n"
                f"{restored.decode('utf-8', errors='replace')}"
            )
        return self._observe(text, ActionName.UNDO_EDIT_SCRIPT.value)

    async def execute_script(self, script_name: str, timeout_s: Optional[int] = None) -> Observation:
        """
        Run a script with the task's interpreter, cwd = workspace root

        stdout and stderr are merged. A nonzero exit is a normal observation.

        Raises:
            FileNotFound: Script does not exist
            ScriptTimeout: Killed after timeout_s; carries partial output
            SpawnFailure: Interpreter could not be started
        """
        path = self.workspace.resolve(script_name)
        if not _is_file(path):
            raise FileNotFound(f"Script {script_name} does not exist")

        timeout = timeout_s or self.execute_timeout_s
        command = shlex.split(self.interpreter_command) + [self.workspace.relative(path)]
        env = {k: os.environ[k] for k in self.passthrough_vars if k in os.environ}

        try:
            process = await asyncio.create_subprocess_exec(
                *command,
                cwd=self.workspace.root,
                env=env,
                stdin=asyncio.subprocess.DEVNULL,
                stdout=asyncio.subprocess.PIPE,
                stderr=asyncio.subprocess.STDOUT,
                start_new_session=True
            )
        except OSError as e:
            raise SpawnFailure(f"Cannot start {command[0]}: {e}") from e

        chunks: list[bytes] = []

        async def drain() -> int:
            while True:
                data = await process.stdout.read(4096)
                if not data:
                    break
                chunks.append(data)
            return await process.wait()

        try:
            # one deadline covers reading output and reaping the process
            exit_status = await asyncio.wait_for(drain(), timeout=timeout)
        except asyncio.TimeoutError:
            kill_process_group(process)
            await process.wait()
            partial = b''.join(chunks).decode('utf-8', errors='replace')
            self.logger.warning("script_timed_out", script=script_name, timeout_s=timeout)
            raise ScriptTimeout(
                f"Script {script_name} exceeded {timeout}s",
                partial_output=partial,
                details={"timeout_s": timeout}
            )

        output = b''.join(chunks).decode('utf-8', errors='replace')
        self.logger.info("script_executed", script=script_name, exit_status=exit_status)
        return self._observe(
            f"The script has been executed. Exit status: {exit_status}. Here is the output:\n{output}",
            ActionName.EXECUTE_SCRIPT.value,
            exit_status=exit_status
        )

    async def final_answer(self, final_answer: str = '') -> Observation:
        self.finished = True
        return self._observe(
            f"Final answer submitted: {final_answer}".rstrip(),
            ActionName.FINAL_ANSWER.value,
            terminal=True
        )

    # High-level actions

    async def inspect_script_lines(self, script_name: str, start_line_number: int, end_line_number: int) -> Observation:
        if start_line_number < 1 or start_line_number > end_line_number:
            raise InvalidRange(
                f"Invalid line range {start_line_number}-{end_line_number}; "
                "need 1 <= start_line_number <= end_line_number"
            )
        lines = self.workspace.read_text(script_name).splitlines()
        end = min(end_line_number, len(lines))
        numbered = [f"{i}: {lines[i - 1]}" for i in range(start_line_number, end + 1)]
        header = f"Here are the lines (the file ends at line {len(lines)}):\n"
        return self._observe(header + '\n'.join(numbered), ActionName.INSPECT_SCRIPT_LINES.value)

    async def understand_file(self, file_name: str, things_to_look_for: str) -> Observation:
        """
        Summarize a file with the worker model

        Files over the prompt budget are split into ceil(len / budget)
        chunks, one worker call each; chunk summaries are concatenated.
        """
        source = ActionName.UNDERSTAND_FILE.value
        content = self.workspace.read_text(file_name)
        if not content:
            return self._observe(f"The file {file_name} is empty.", source)

        budget = self.understand_chunk_chars
        count = math.ceil(len(content) / budget)
        summaries = []
        for i in range(count):
            chunk = content[i * budget:(i + 1) * budget]
            segment = f" (segment {i + 1} of {count})" if count > 1 else ''
            prompt = (
                f"Given this{segment} of the file {file_name}:\n"
                f"```\n{chunk}\n```\n"
                "Here is a detailed description on what to look for and what should be returned:\n"
                f"{things_to_look_for}\n"
                "The description should be short and reference the critical lines relevant to what "
                "is being looked for. Only describe what is objectively confirmed by the file content."
            )
            try:
                summaries.append(await self._worker_call(self.profiles.understand_file, prompt))
            except GatewayError as e:
                return self._gateway_error_observation(e, source)

        if count == 1:
            return self._observe(summaries[0], source)
        text = '\n\n'.join(f"Segment {i + 1}/{count}:\n{s}" for i, s in enumerate(summaries))
        return self._observe(text, source)

    async def edit_script_ai(
        self,
        script_name: str,
        edit_instruction: str,
        save_name: str,
        start_line_number: Optional[int] = None,
        end_line_number: Optional[int] = None
    ) -> Observation:
        """
        Edit a script (or a line segment of it) with the worker model

        The previous content of save_name goes onto its backup stack before
        the atomic write. A missing script is edited as an empty file.
        """
        source = ActionName.EDIT_SCRIPT_AI.value
        src_path = self.workspace.resolve(script_name)
        self.workspace.resolve(save_name)
        old = self.workspace.read_text(script_name) if _is_file(src_path) else ''

        lines = old.splitlines(keepends=True)
        if start_line_number is not None and end_line_number is not None:
            if start_line_number < 1 or start_line_number > end_line_number:
                raise InvalidRange(f"Invalid line range {start_line_number}-{end_line_number}")
            end = min(end_line_number, len(lines))
            before, target, after = lines[:start_line_number - 1], lines[start_line_number - 1:end], lines[end:]
        else:
            before, target, after = [], lines, []

        prompt = (
            f"Given this python script:\n```python\n{''.join(target)}\n```\n"
            f"Edit the script by following the instruction:\n{edit_instruction}\n"
            "Provide the full code after the edit, making no other changes. "
            "Start the python code with \"```python\".\n"
        )
        try:
            reply = await self._worker_call(self.profiles.edit_script, prompt)
        except GatewayError as e:
            return self._gateway_error_observation(e, source)

        edited = extract_code(reply)
        if target and before + after and not edited.endswith('\n'):
            edited += '\n'
        new = ''.join(before) + edited + ''.join(after)

        self.workspace.push_backup(save_name)
        self.workspace.write_bytes(save_name, new.encode('utf-8'))

        diff = ''.join(difflib.unified_diff(
            old.splitlines(keepends=True),
            new.splitlines(keepends=True),
            fromfile=script_name,
            tofile=save_name
        ))
        self.logger.info("script_edited", script=script_name, save_name=save_name, changed=bool(diff))
        if not diff:
            return self._observe(f"The edited file is saved to {save_name}. The edit made no changes.", source)
        return self._observe(
            f"The edited file is saved to {save_name}. Here is the diff, please check if the edit "
            f"is correct and desirable:\n\n{diff}",
            source
        )

    async def reflection(self, things_to_reflect_on: str, log: Sequence[StepRecord]) -> Observation:
        source = ActionName.REFLECTION.value
        history = '\n'.join(render_step_summary(r) for r in log) if log else NO_STEPS_MARKER
        prompt = (
            "Here is a log of the steps taken so far:\n"
            f"{history}\n"
            "Reflect on the following, and be specific about what to do next:\n"
            f"{things_to_reflect_on}\n"
        )
        try:
            text = await self._worker_call(self.profiles.reflection, prompt)
        except GatewayError as e:
            return self._gateway_error_observation(e, source)
        return self._observe(text, source)


def _validation_summary(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        loc = '.'.join(str(p) for p in item['loc']) or 'input'
        parts.append(f"{loc}: {item['msg']}")
    return '; '.join(parts)
