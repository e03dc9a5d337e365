"""
Action environment tests
"""
import asyncio
import os
import random
import shlex
import sys

import pytest

from app.models import ActionName, AgentProfiles, CompletionRequest, UsagePurpose
from app.services import environment_service
from app.services.environment_service import (
    ERROR_MARKER,
    TIMEOUT_MARKER,
    TRUNCATION_MARKER,
    ActionEnvironment,
    Workspace,
    extract_code,
    truncate_observation
)
from app.services.gateway_service import ModelGateway, ScriptedBackend
from app.utils import EnvironmentClosed, PathEscapesSandbox, ScriptExhausted, TransportError
from tests.factories import make_model

PYTHON = shlex.quote(sys.executable)


class FailingBackend:
    async def complete(self, request: CompletionRequest):
        raise TransportError("connection reset")


@pytest.fixture
def workspace_dir(tmp_path):
    root = tmp_path / 'ws'
    root.mkdir()
    (root / 'notes.txt').write_text("seed\n", encoding='utf-8')
    (root / 'train.py').write_text("a\nb\nc\nd\n", encoding='utf-8')
    (root / 'data').mkdir()
    return root


@pytest.fixture
def make_env(workspace_dir, ledger):
    def factory(worker_replies=(), backend=None, **kwargs) -> ActionEnvironment:
        backend = backend or ScriptedBackend(list(worker_replies), model_id='worker')
        kwargs.setdefault('interpreter_command', PYTHON)
        return ActionEnvironment(
            Workspace(workspace_dir),
            ModelGateway({'worker': backend}),
            ledger,
            make_model('worker'),
            **kwargs
        )
    return factory


def python_reply(code: str) -> str:
    return f"Here is the edited script.\n```python\n{code}```\n"


class TestHelpers:
    def test_truncation_keeps_head_and_tail(self):
        text = 'h' * 150 + 't' * 150

        clipped, truncated = truncate_observation(text, cap=100)

        assert truncated
        assert len(clipped) == 100
        assert clipped.startswith('h') and clipped.endswith('t')
        assert TRUNCATION_MARKER in clipped

    def test_short_text_untouched(self):
        assert truncate_observation("short", cap=100) == ("short", False)

    def test_extract_code(self):
        assert extract_code("intro\n```python\nx = 1\n```\nbye") == "x = 1\n"
        assert extract_code("x = 2") == "x = 2"


class TestSandbox:
    def escaping_paths(self, workspace_dir, tmp_path) -> list[str]:
        outside = tmp_path / 'outside'
        outside.mkdir(exist_ok=True)
        (outside / 'secret.txt').write_text("secret", encoding='utf-8')
        os.symlink(outside, workspace_dir / 'link')

        prefixes = ["../", "../../", "a/../../", "./../", "data/../../", "/", "/tmp/", "~/", "link/", "data/../link/"]
        targets = ["x.py", "secret.txt", "train.py", "dir/y.txt", "."]
        return [p + t for p in prefixes for t in targets]

    def action_inputs(self, path: str) -> list[tuple[str, dict]]:
        return [
            (ActionName.LIST_FILES.value, {"dir_path": path}),
            (ActionName.READ_FILE.value, {"file_name": path}),
            (ActionName.WRITE_FILE.value, {"file_name": path, "content": "pwned"}),
            (ActionName.APPEND_FILE.value, {"file_name": path, "content": "pwned"}),
            (ActionName.COPY_FILE.value, {"source": "notes.txt", "destination": path, "overwrite": True}),
            (ActionName.COPY_FILE.value, {"source": path, "destination": "copied.txt"}),
            (ActionName.UNDO_EDIT_SCRIPT.value, {"script_name": path}),
            (ActionName.EXECUTE_SCRIPT.value, {"script_name": path}),
            (ActionName.INSPECT_SCRIPT_LINES.value, {"script_name": path, "start_line_number": 1, "end_line_number": 2}),
            (ActionName.UNDERSTAND_FILE.value, {"file_name": path, "things_to_look_for": "anything"}),
            (ActionName.EDIT_SCRIPT_AI.value, {"script_name": path, "edit_instruction": "x", "save_name": "out.py"}),
            (ActionName.EDIT_SCRIPT_AI.value, {"script_name": "train.py", "edit_instruction": "x", "save_name": path}),
        ]

    async def test_escaping_paths_never_touch_the_filesystem(self, make_env, workspace_dir, tmp_path, monkeypatch):
        paths = self.escaping_paths(workspace_dir, tmp_path)
        assert len(paths) == 50
        env = make_env()

        touched = []

        def spy(name):
            def fail(*args, **kwargs):
                touched.append((name, args))
                raise AssertionError(f"{name} called")
            return fail

        for helper in ('_read_bytes', '_write_atomic', '_list_dir', '_remove', '_make_dirs', '_is_file', '_is_dir'):
            monkeypatch.setattr(environment_service, helper, spy(helper))

        for path in paths:
            for name, action_input in self.action_inputs(path):
                observation = await env.dispatch(name, action_input)
                assert observation.is_error, (name, path)
                assert observation.text.startswith("EnvError:"), (name, path)

        assert touched == []
        assert (tmp_path / 'outside' / 'secret.txt').read_text(encoding='utf-8') == "secret"

    @pytest.mark.parametrize("path", ["\x00", "notes.txt\x00.py", "../notes.txt"])
    def test_resolve_rejects(self, workspace_dir, path):
        with pytest.raises(PathEscapesSandbox):
            Workspace(workspace_dir).resolve(path)

    def test_resolve_accepts_inner_dotdot(self, workspace_dir):
        assert Workspace(workspace_dir).resolve("data/../notes.txt") == (workspace_dir / 'notes.txt').resolve()


class TestLowLevelActions:
    async def test_list_files(self, make_env):
        observation = await make_env().dispatch("List Files", {"dir_path": "."})
        assert observation.text == "data/\nnotes.txt\ntrain.py"

    async def test_list_files_not_a_directory(self, make_env):
        observation = await make_env().dispatch("List Files", {"dir_path": "notes.txt"})
        assert observation.is_error

    async def test_copy_refuses_overwrite(self, make_env, workspace_dir):
        env = make_env()

        refused = await env.dispatch("Copy File", {"source": "notes.txt", "destination": "train.py"})
        copied = await env.dispatch("Copy File", {"source": "notes.txt", "destination": "data/n.txt"})

        assert refused.is_error
        assert not copied.is_error
        assert (workspace_dir / 'data' / 'n.txt').read_text(encoding='utf-8') == "seed\n"

    async def test_write_and_append(self, make_env, workspace_dir):
        env = make_env()
        await env.dispatch("Write File", {"file_name": "new/out.txt", "content": "a"})
        await env.dispatch("Append File", {"file_name": "new/out.txt", "content": "b"})
        assert (workspace_dir / 'new' / 'out.txt').read_text(encoding='utf-8') == "ab"

    def test_append_file_description(self, make_env):
        [spec] = [s for s in make_env().specs(planner_visible_only=False) if s.name == "Append File"]

        assert "append content to the end of a file" in spec.description
        assert "new location" not in spec.description

    async def test_actions_without_a_model_record_no_usage(self, make_env, workspace_dir, ledger):
        (workspace_dir / 'ok.py').write_text("print('ok')\n", encoding='utf-8')
        env = make_env()

        await env.dispatch("List Files", {"dir_path": "."})
        await env.dispatch("Copy File", {"source": "notes.txt", "destination": "copy.txt"})
        await env.dispatch("Undo Edit Script", {"script_name": "train.py"})
        await env.dispatch("Execute Script", {"script_name": "ok.py"})
        await env.dispatch(
            "Inspect Script Lines", {"script_name": "train.py", "start_line_number": 1, "end_line_number": 2}
        )
        await env.dispatch("Final Answer", {"final_answer": "done"})

        assert ledger.events == []

    async def test_invalid_input_is_an_error_observation(self, make_env):
        env = make_env()

        observation = await env.dispatch("List Files", {"bogus": 1})

        assert observation.is_error
        assert "bogus" in observation.text
        assert env.validate_input("List Files", {"bogus": 1}) is not None
        assert env.validate_input("List Files", {}) is None

    async def test_final_answer_closes_the_environment(self, make_env):
        env = make_env()

        observation = await env.dispatch("Final Answer", {"final_answer": "threshold tuned"})

        assert observation.terminal
        with pytest.raises(EnvironmentClosed):
            await env.dispatch("List Files", {})

    def test_planner_sees_no_raw_file_io(self, make_env):
        env = make_env()
        visible = env.action_names()
        assert "Read File" not in visible
        assert "Write File" not in visible
        assert "Edit Script (AI)" in visible
        assert "Read File" in env.action_names(planner_visible_only=False)


class TestExecuteScript:
    async def test_output_and_exit_status(self, make_env, workspace_dir):
        (workspace_dir / 'run.py').write_text("print('hello')\nraise SystemExit(3)\n", encoding='utf-8')

        observation = await make_env().dispatch("Execute Script", {"script_name": "run.py"})

        assert observation.exit_status == 3
        assert not observation.is_error
        assert "hello" in observation.text

    async def test_runs_in_workspace_root(self, make_env, workspace_dir):
        (workspace_dir / 'data' / 'cwd.py').write_text("open('made.txt', 'w').write('x')\n", encoding='utf-8')

        await make_env().dispatch("Execute Script", {"script_name": "data/cwd.py"})

        assert (workspace_dir / 'made.txt').exists()

    async def test_timeout_keeps_partial_output(self, make_env, workspace_dir):
        (workspace_dir / 'slow.py').write_text(
            "import time\nprint('started', flush=True)\ntime.sleep(30)\n", encoding='utf-8'
        )

        observation = await make_env(execute_timeout_s=1).dispatch("Execute Script", {"script_name": "slow.py"})

        assert observation.is_error
        assert "started" in observation.text
        assert observation.text.endswith(TIMEOUT_MARKER)

    async def test_timeout_kills_grandchildren(self, make_env, workspace_dir):
        (workspace_dir / 'spawn.py').write_text(
            "import subprocess, sys, time\n"
            "subprocess.Popen([sys.executable, '-c', "
            "\"import time; time.sleep(2); open('late.txt', 'w').write('x')\"])\n"
            "print('spawned', flush=True)\n"
            "time.sleep(30)\n",
            encoding='utf-8'
        )

        observation = await make_env(execute_timeout_s=1).dispatch("Execute Script", {"script_name": "spawn.py"})
        await asyncio.sleep(3)

        assert observation.text.endswith(TIMEOUT_MARKER)
        assert not (workspace_dir / 'late.txt').exists()

    async def test_environment_is_limited_to_the_allowlist(self, make_env, workspace_dir, monkeypatch):
        monkeypatch.setenv("GPT_4_API_KEY", "sk-secret")
        monkeypatch.setenv("LANG", "C.UTF-8")
        (workspace_dir / 'env.py').write_text("import os\nprint(sorted(os.environ))\n", encoding='utf-8')

        observation = await make_env(passthrough_vars=["LANG"]).dispatch("Execute Script", {"script_name": "env.py"})

        assert observation.exit_status == 0
        assert "'LANG'" in observation.text
        assert "GPT_4_API_KEY" not in observation.text
        assert "sk-secret" not in observation.text

    async def test_default_allowlist_hides_api_keys(self, make_env, workspace_dir, monkeypatch):
        monkeypatch.setenv("GPT_4_API_KEY", "sk-secret")
        (workspace_dir / 'env.py').write_text("import os\nprint(dict(os.environ))\n", encoding='utf-8')

        observation = await make_env().dispatch("Execute Script", {"script_name": "env.py"})

        assert observation.exit_status == 0
        assert "sk-secret" not in observation.text

    async def test_missing_script(self, make_env):
        observation = await make_env().dispatch("Execute Script", {"script_name": "nope.py"})
        assert observation.is_error

    async def test_unstartable_interpreter(self, make_env, workspace_dir):
        env = make_env(interpreter_command="/nonexistent/python-interpreter")
        observation = await env.dispatch("Execute Script", {"script_name": "train.py"})
        assert observation.is_error


class TestHighLevelActions:
    async def test_inspect_lines(self, make_env):
        env = make_env()

        observation = await env.dispatch(
            "Inspect Script Lines", {"script_name": "train.py", "start_line_number": 2, "end_line_number": 9}
        )
        bad = await env.dispatch(
            "Inspect Script Lines", {"script_name": "train.py", "start_line_number": 3, "end_line_number": 2}
        )

        assert observation.text.endswith("2: b\n3: c\n4: d")
        assert bad.is_error

    async def test_edit_whole_script(self, make_env, workspace_dir, ledger):
        env = make_env([python_reply("x = 1\n")])

        observation = await env.dispatch(
            "Edit Script (AI)", {"script_name": "train.py", "edit_instruction": "set x", "save_name": "train.py"}
        )

        assert (workspace_dir / 'train.py').read_text(encoding='utf-8') == "x = 1\n"
        assert "--- train.py" in observation.text
        assert "+x = 1" in observation.text
        assert str(workspace_dir) not in observation.text
        assert [e.purpose for e in ledger.events] == [UsagePurpose.WORKER_ACTION]

    async def test_edit_segment(self, make_env, workspace_dir):
        env = make_env([python_reply("X\n")])

        await env.dispatch("Edit Script (AI)", {
            "script_name": "train.py",
            "edit_instruction": "merge b and c",
            "save_name": "train.py",
            "start_line_number": 2,
            "end_line_number": 3
        })

        assert (workspace_dir / 'train.py').read_text(encoding='utf-8') == "a\nX\nd\n"

    async def test_edit_missing_script_creates_it_and_undo_removes_it(self, make_env, workspace_dir):
        env = make_env([python_reply("print(1)\n")])

        await env.dispatch("Edit Script (AI)", {"script_name": "new.py", "edit_instruction": "x", "save_name": "new.py"})
        assert (workspace_dir / 'new.py').exists()

        await env.dispatch("Undo Edit Script", {"script_name": "new.py"})
        assert not (workspace_dir / 'new.py').exists()

    async def test_undo_restores_prior_versions(self, make_env, workspace_dir):
        original = (workspace_dir / 'train.py').read_bytes()
        for seed in range(30):
            rng = random.Random(seed)
            ops = [rng.choice(['edit', 'edit', 'undo']) for _ in range(rng.randint(1, 20))]
            env = make_env([python_reply(f"v = {n}\n") for n in range(len(ops))])
            expected = [original]

            for n, op in enumerate(ops):
                if op == 'edit':
                    await env.dispatch(
                        "Edit Script (AI)",
                        {"script_name": "train.py", "edit_instruction": "bump", "save_name": "train.py"}
                    )
                    expected.append(f"v = {n}\n".encode())
                else:
                    observation = await env.dispatch("Undo Edit Script", {"script_name": "train.py"})
                    if len(expected) == 1:
                        assert observation.is_error
                    else:
                        expected.pop()
                assert (workspace_dir / 'train.py').read_bytes() == expected[-1]

            while len(expected) > 1:
                await env.dispatch("Undo Edit Script", {"script_name": "train.py"})
                expected.pop()
            assert (workspace_dir / 'train.py').read_bytes() == original

    async def test_understand_file_chunks(self, make_env, workspace_dir, ledger):
        (workspace_dir / 'big.txt').write_text('z' * 250, encoding='utf-8')
        env = make_env(["first", "second", "third"], understand_chunk_chars=100)

        observation = await env.dispatch("Understand File", {"file_name": "big.txt", "things_to_look_for": "z"})

        assert "Segment 1/3:\nfirst" in observation.text
        assert "Segment 3/3:\nthird" in observation.text
        assert len(ledger.events) == 3

    async def test_worker_actions_record_their_profile(self, make_env, ledger):
        profiles = AgentProfiles()
        env = make_env(["summary", python_reply("x = 1\n"), "reflected"])

        await env.dispatch("Understand File", {"file_name": "notes.txt", "things_to_look_for": "seed"})
        await env.dispatch(
            "Edit Script (AI)", {"script_name": "train.py", "edit_instruction": "set x", "save_name": "train.py"}
        )
        await env.dispatch("Reflection", {"things_to_reflect_on": "progress"})

        assert [e.profile for e in ledger.events] == [
            profiles.understand_file,
            profiles.edit_script,
            profiles.reflection
        ]
        assert {e.purpose for e in ledger.events} == {UsagePurpose.WORKER_ACTION}
        assert {e.model_id for e in ledger.events} == {'worker'}

    async def test_worker_failure_becomes_observation(self, make_env):
        env = make_env(backend=FailingBackend())

        observation = await env.dispatch("Reflection", {"things_to_reflect_on": "progress"})

        assert observation.is_error
        assert observation.text.startswith(ERROR_MARKER)

    async def test_exhausted_script_propagates(self, make_env):
        with pytest.raises(ScriptExhausted):
            await make_env([]).dispatch("Reflection", {"things_to_reflect_on": "progress"})

    async def test_reflection_sees_the_log(self, make_env):
        backend = ScriptedBackend(["keep going"], model_id='worker')
        env = make_env(backend=backend, log_source=lambda: [])

        observation = await env.dispatch("Reflection", {"things_to_reflect_on": "progress"})

        assert observation.text == "keep going"
        assert "No steps have been taken yet." in backend.requests[0].prompt
