"""
Response Grammar
Planner prompt rendering and structured planner response parsing

Everything here is a pure function. Parse failures are returned as
ParseFailure values, never raised.
"""
import json
import math
import re
from typing import Any, Iterable, Optional, Sequence, Union

import orjson

from app.models import (
    ActionSpec,
    ParseFailure,
    ParseFailureKind,
    PlannerResponse,
    StepRecord
)

PROMPT_TEMPLATE_VERSION = "planner-prompt/1"

NO_STEPS_MARKER = "No steps have been taken yet."
NOTHING_RETRIEVED_MARKER = "Nothing has been retrieved from earlier steps yet."

# canonical order; field name on PlannerResponse
SECTIONS: tuple[tuple[str, str], ...] = (
    ("Reflection", "reflection"),
    ("Research Plan and Status", "plan_and_status"),
    ("Fact Check", "fact_check"),
    ("Thought", "thought"),
    ("Action", "action_name"),
    ("Action Input", "action_input"),
)

# "Action Input" must come before "Action" in the alternation
_HEADER_RE = re.compile(
    r"^[ \t]*(reflection|research plan and status|fact check|thought|action input|action)[ \t]*:",
    re.IGNORECASE | re.MULTILINE
)

_HEADER_KEYS = {header.lower(): field for header, field in SECTIONS}

MAX_INPUT_DEPTH = 64
_INT64_MIN, _INT64_MAX = -(2 ** 63), 2 ** 63 - 1
_OFFENDING_TEXT_LIMIT = 2000


class _InvalidJsonValue(ValueError):
    pass


def _reject_constant(name: str) -> Any:
    raise _InvalidJsonValue(f"non-finite number {name} is not allowed")


def _check_encodable(text: str) -> None:
    try:
        text.encode('utf-8')
    except UnicodeEncodeError:
        raise _InvalidJsonValue("string holds an unpaired surrogate") from None


def _check_json_value(value: Any, depth: int = 0) -> None:
    """Action inputs must be plain JSON the trace writer can serialize"""
    if depth > MAX_INPUT_DEPTH:
        raise _InvalidJsonValue(f"nesting deeper than {MAX_INPUT_DEPTH}")
    if isinstance(value, str):
        _check_encodable(value)
        return
    if isinstance(value, bool) or value is None:
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise _InvalidJsonValue(f"number out of range ({value})")
        return
    if isinstance(value, int):
        if not _INT64_MIN <= value <= _INT64_MAX:
            raise _InvalidJsonValue("integer does not fit in 64 bits")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            _check_encodable(key)
            _check_json_value(item, depth + 1)
        return
    if isinstance(value, list):
        for item in value:
            _check_json_value(item, depth + 1)


def extract_json_object(text: str) -> Optional[str]:
    """
    Find the first balanced {...} block

    Braces inside JSON strings are ignored. Text after the block is not
    looked at.

    Returns:
        Optional[str]: The block, or None if there is no balanced block
    """
    start = text.find('{')
    if start < 0:
        return None

    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == '\\':
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == '{':
            depth += 1
        elif ch == '}':
            depth -= 1
            if depth == 0:
                return text[start:i + 1]
    return None


def canonical_action_input(action_input: dict[str, Any]) -> str:
    """Sorted-key compact JSON used for action equality"""
    return orjson.dumps(action_input, option=orjson.OPT_SORT_KEYS).decode()


def _split_sections(text: str) -> dict[str, str]:
    """Map field name -> raw section text; the last occurrence of a header wins"""
    matches = list(_HEADER_RE.finditer(text))
    sections: dict[str, str] = {}
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        field = _HEADER_KEYS[re.sub(r'\s+', ' ', match.group(1).lower())]
        sections[field] = text[match.end():end]
    return sections


def _last_header_end(text: str, header: str) -> Optional[int]:
    end = None
    for match in _HEADER_RE.finditer(text):
        if match.group(1).lower() == header:
            end = match.end()
    return end


def _failure(kind: ParseFailureKind, detail: str, offending_text: str) -> ParseFailure:
    return ParseFailure(kind=kind, detail=detail, offending_text=offending_text[:_OFFENDING_TEXT_LIMIT])


def parse_planner_response(
    text: Union[str, bytes],
    allowed_actions: Iterable[str]
) -> Union[PlannerResponse, ParseFailure]:
    """
    Parse a planner response

    Headers are matched case-insensitively at line start, in any order.
    The Action Input is the first balanced JSON object after its header.

    Args:
        text: Raw model output (bytes are decoded as UTF-8 with replacement)
        allowed_actions: Action names the planner may choose

    Returns:
        PlannerResponse on success, otherwise a classified ParseFailure
    """
    if isinstance(text, bytes):
        text = text.decode('utf-8', errors='replace')

    if not text.strip():
        return _failure(ParseFailureKind.EMPTY_RESPONSE, "response is empty", text)

    sections = _split_sections(text)
    missing = [header for header, field in SECTIONS if field not in sections]
    if missing:
        return _failure(
            ParseFailureKind.MISSING_SECTION,
            f"missing section(s): {', '.join(missing)}",
            text
        )

    action_lines = [line.strip() for line in sections['action_name'].splitlines() if line.strip()]
    if not action_lines:
        return _failure(ParseFailureKind.MISSING_SECTION, "Action section is empty", text)
    action_name = action_lines[0]

    allowed = {name.lower(): name for name in allowed_actions}
    if action_name.lower() not in allowed:
        return _failure(
            ParseFailureKind.UNKNOWN_ACTION,
            f"unknown action '{action_name}'",
            action_name
        )
    action_name = allowed[action_name.lower()]

    # scan to the end of the text so a JSON string holding a header-like line stays intact
    input_start = _last_header_end(text, 'action input')
    raw_input = text[input_start:] if input_start is not None else sections['action_input']
    block = extract_json_object(raw_input)
    if block is None:
        return _failure(
            ParseFailureKind.MALFORMED_ACTION_INPUT,
            "no balanced JSON object after Action Input",
            sections['action_input']
        )

    try:
        action_input = json.loads(block, parse_constant=_reject_constant)
        if not isinstance(action_input, dict):
            raise _InvalidJsonValue("Action Input must be a JSON object")
        _check_json_value(action_input)
    except (ValueError, RecursionError) as e:
        return _failure(ParseFailureKind.MALFORMED_ACTION_INPUT, f"invalid JSON: {e}", block)

    return PlannerResponse(
        reflection=sections['reflection'].strip(),
        plan_and_status=sections['plan_and_status'].strip(),
        fact_check=sections['fact_check'].strip(),
        thought=sections['thought'].strip(),
        action_name=action_name,
        action_input=action_input
    )


def render_planner_response(response: PlannerResponse) -> str:
    """Serialize a response in canonical section order"""
    action_input = orjson.dumps(
        response.action_input,
        option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2
    ).decode()
    return (
        f"Reflection: {response.reflection}\n"
        f"Research Plan and Status: {response.plan_and_status}\n"
        f"Fact Check: {response.fact_check}\n"
        f"Thought: {response.thought}\n"
        f"Action: {response.action_name}\n"
        f"Action Input: {action_input}\n"
    )


def render_action_doc(spec: ActionSpec) -> str:
    """Planner-facing documentation of one action"""
    return (
        f"- {spec.name}:\n"
        f"    Description: {spec.description}\n"
        f"    Usage:\n"
        f"{_indent(spec.usage, 8)}\n"
        f"    Returns: {spec.returns}\n"
    )


def _indent(text: str, width: int) -> str:
    pad = ' ' * width
    return '\n'.join(pad + line if line else line for line in text.splitlines())


def render_step_summary(record: StepRecord) -> str:
    """One step as it appears in the recency window"""
    return (
        f"Step {record.index}:\n"
        f"Action: {record.action_name}\n"
        f"Action Input: {canonical_action_input(record.action_input)}\n"
        f"Observation:\n"
        f"```\n{record.observation.text}\n```\n"
    )


_RESPONSE_FORMAT = (
    "Always respond in this format exactly:\n"
    "Reflection: What does the observation mean? If there is an error, what caused it and how to debug?\n"
    "Research Plan and Status: The full high level research plan, with the current status and "
    "confirmed results of each step briefly annotated.\n"
    "Fact Check: List all objective statements in the updates to Research Plan and Status one by one "
    "and point out whether each is guessed or confirmed by a previous observation directly above.\n"
    "Thought: What you are currently doing, what actions to perform and why\n"
    "Action: the action to take, should be one of the names of the actions above\n"
    "Action Input: the input to the action as a valid JSON object\n"
)


def render_planner_prompt(
    task_description: str,
    available_actions: Sequence[ActionSpec],
    recent_steps: Sequence[StepRecord],
    retrieved_context: Optional[str] = None
) -> str:
    """
    Render the planner prompt

    Blocks, in order: task description, action documentation, retrieved
    context (omitted entirely when None), recent steps, response format.

    Args:
        task_description: Task text shown to the planner
        available_actions: Actions the planner may call (non-empty)
        recent_steps: Last k step records
        retrieved_context: Summary of older steps; None when retrieval is disabled

    Returns:
        str: Prompt text
    """
    if not available_actions:
        raise ValueError("available_actions must not be empty")

    parts = [
        f"[{PROMPT_TEMPLATE_VERSION}]\n",
        "You are working on the following research task.\n",
        f"Task description:\n{task_description.strip()}\n",
        "You can use the following actions:\n" + "\n".join(render_action_doc(a) for a in available_actions),
    ]

    if retrieved_context is not None:
        context = retrieved_context.strip() or NOTHING_RETRIEVED_MARKER
        parts.append(f"Relevant history from earlier steps:\n{context}\n")

    if recent_steps:
        parts.append("Recent steps:\n" + "\n".join(render_step_summary(s) for s in recent_steps))
    else:
        parts.append(f"Recent steps:\n{NO_STEPS_MARKER}\n")

    parts.append(_RESPONSE_FORMAT)
    return "\n".join(parts)
