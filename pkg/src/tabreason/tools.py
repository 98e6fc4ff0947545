"""Tool implementations and the trajectory execution loop.

Each LLM-backed tool renders its few-shot prompt from the current state,
asks the gateway for a completion, and parses the tool's output section
into the next state.  The two deterministic tools (program executor and
answer generator) transform state locally.  ``run_trajectory`` folds the
lot and captures failures inside the record instead of raising.
"""

from __future__ import annotations

import ast
import enum
import logging
import re
from dataclasses import dataclass, replace
from decimal import Decimal

from .answers import parse_number, validate_scale_checked
from .backend import BackendError, CassetteMiss, ChatRequest, RoutingTable, Timeout
from .interpreter import (
    ExecError,
    ExecLimits,
    LexError,
    ProgramSyntaxError,
    assigns_answer,
    execute_program,
    parse_program,
    render_number,
    render_value,
)
from .model import (
    AnswerKind,
    AnswerSlot,
    FailureKind,
    FailureReason,
    FinalAnswer,
    Phase,
    ProblemInstance,
    ScaleUnit,
    SlotKind,
    StepRecord,
    ToolId,
    ToolState,
    Trajectory,
    TrajectoryRecord,
    initial_state,
)
from .planner import PromptTemplate, load_templates, prompt_values, render_prompt
from .tables import EmptyTableError, check_subtable, parse_table, render_table

SECTION_HEADERS = {
    ToolId.ROW_LOOKUP: "SIMPLIFIED TABLE:",
    ToolId.COLUMN_LOOKUP: "SIMPLIFIED TABLE:",
    ToolId.CONTEXT_EXTRACTOR: "SIMPLIFIED CONTEXT:",
    ToolId.SPAN_EXTRACTOR: "SOLUTION:",
    ToolId.SOLUTION_GENERATOR: "SOLUTION:",
    ToolId.KNOWLEDGE_RETRIEVAL: "KNOWLEDGE:",
    ToolId.PROGRAM_GENERATOR_AND_VERIFIER: "ANSWER:",
    ToolId.SCALE_FINDER: "SCALE:",
}

STOP_MARKER = "#END"

_ANSWER_SENTENCE = re.compile(r"the answer is\s*", re.IGNORECASE)
_log = logging.getLogger(__name__)


class ParseError(Exception):
    """A completion (or state) was unusable for the tool at hand."""

    def __init__(self, tool: ToolId, message: str) -> None:
        super().__init__(f"{tool.wire}: {message}")
        self.tool = tool
        self.message = message


class BindingKind(enum.Enum):
    LLM = "llm"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class ToolBinding:
    """How one tool is wired: prompt template and routing key, or neither."""

    tool: ToolId
    kind: BindingKind
    template: PromptTemplate | None = None
    adapter: str | None = None  # routing key handed to the routing table
    output_parser: str | None = None

    def __post_init__(self) -> None:
        if self.kind is BindingKind.LLM:
            if self.template is None or self.adapter is None:
                raise ValueError(f"{self.tool.wire}: llm binding needs template and adapter")
        else:
            if self.template is not None or self.adapter is not None:
                raise ValueError(
                    f"{self.tool.wire}: deterministic binding carries no template or adapter"
                )


_PARSER_IDS = {
    ToolId.ROW_LOOKUP: "table",
    ToolId.COLUMN_LOOKUP: "table",
    ToolId.CONTEXT_EXTRACTOR: "text",
    ToolId.SPAN_EXTRACTOR: "spans",
    ToolId.SOLUTION_GENERATOR: "text",
    ToolId.KNOWLEDGE_RETRIEVAL: "text",
    ToolId.PROGRAM_GENERATOR_AND_VERIFIER: "program",
    ToolId.SCALE_FINDER: "scale",
}


def default_bindings(templates: dict[str, PromptTemplate] | None = None) -> dict[ToolId, ToolBinding]:
    """One binding per tool; LLM tools pick up their packaged template."""
    templates = templates if templates is not None else load_templates()
    bindings: dict[ToolId, ToolBinding] = {}
    for tool in ToolId:
        if tool.deterministic:
            bindings[tool] = ToolBinding(tool, BindingKind.DETERMINISTIC)
        else:
            bindings[tool] = ToolBinding(
                tool,
                BindingKind.LLM,
                template=templates[tool.key],
                adapter=tool.key,
                output_parser=_PARSER_IDS[tool],
            )
    return bindings


def render_slot(slot: AnswerSlot) -> str:
    """The working answer as the text other prompts may quote."""
    if slot.kind in (SlotKind.EMPTY, SlotKind.SCALE):
        return ""
    value = slot.value
    if slot.kind is SlotKind.FINAL:
        assert isinstance(value, FinalAnswer)
        value = value.value
    if isinstance(value, Decimal):
        return render_number(value)
    if isinstance(value, tuple):
        return render_value(list(value))
    if isinstance(value, bool):
        return render_value(value)
    return str(value)


def render_tool_prompt(binding: ToolBinding, state: ToolState) -> str:
    if binding.template is None:
        raise ValueError(f"{binding.tool.wire} has no prompt template")
    values = prompt_values(
        question=state.question,
        context=state.context,
        table_text=render_table(state.table),
        solution=render_slot(state.answer),
    )
    return render_prompt(binding.template, values)


def _extract_balanced_list(text: str) -> str | None:
    """The substring from the first '[' to its matching ']', quote-aware."""
    start = text.find("[")
    if start < 0:
        return None
    depth = 0
    quote: str | None = None
    i = start
    while i < len(text):
        ch = text[i]
        if quote is not None:
            if ch == "\\":
                i += 2
                continue
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
        i += 1
    return None


def parse_tool_output(tool: ToolId, completion: str):
    """Cut at the stop marker, find the tool's section, shape the payload.

    A missing section header is tolerated (the whole completion is the
    payload); a payload that lacks the tool's required structure is not.
    """
    if tool.deterministic:
        raise ValueError(f"{tool.wire} produces no completion to parse")
    cut = completion.find(STOP_MARKER)
    if cut >= 0:
        completion = completion[:cut]
    header = SECTION_HEADERS[tool]
    at = completion.find(header)
    payload = completion[at + len(header) :] if at >= 0 else completion
    payload = payload.strip()
    if not payload and tool is not ToolId.SCALE_FINDER:
        raise ParseError(tool, "empty payload")

    if tool in (ToolId.ROW_LOOKUP, ToolId.COLUMN_LOOKUP):
        return payload  # table text; parsed against the state in apply_tool
    if tool in (ToolId.CONTEXT_EXTRACTOR, ToolId.SOLUTION_GENERATOR, ToolId.KNOWLEDGE_RETRIEVAL):
        return payload
    if tool is ToolId.SPAN_EXTRACTOR:
        literal = _extract_balanced_list(payload)
        if literal is None:
            raise ParseError(tool, "payload is not a bracketed span list")
        try:
            items = ast.literal_eval(literal)
        except (ValueError, SyntaxError):
            raise ParseError(tool, f"unreadable span list: {literal[:80]!r}") from None
        if not isinstance(items, list) or not items:
            raise ParseError(tool, "span list is empty or not a list")
        return tuple(str(item) for item in items)
    if tool is ToolId.PROGRAM_GENERATOR_AND_VERIFIER:
        try:
            program = parse_program(payload)
        except (LexError, ProgramSyntaxError) as exc:
            raise ParseError(tool, f"program does not parse: {exc}") from None
        if not assigns_answer(program):
            raise ParseError(tool, "program never assigns `ans`")
        return payload
    if tool is ToolId.SCALE_FINDER:
        token = payload.splitlines()[0] if payload else ""
        unit, recognized = validate_scale_checked(token)
        if not recognized:
            # off-vocabulary tokens degrade to "no scale"; the weak label
            # will catch it if the scale actually mattered
            _log.debug("scale token off vocabulary: %r", token)
        return unit
    raise ValueError(f"unhandled tool {tool}")  # pragma: no cover


def _answer_sentence(text: str) -> str | None:
    """Payload of the last "The answer is ..." sentence, if any."""
    last = None
    for match in _ANSWER_SENTENCE.finditer(text):
        last = match
    if last is None:
        return None
    tail = text[last.end() :]
    # the answer runs to the end of its line; a bracketed list may span
    # further and keeps its trailing period out of the value
    if tail.lstrip().startswith("["):
        literal = _extract_balanced_list(tail)
        if literal is not None:
            return literal
    line = tail.splitlines()[0] if tail else ""
    line = line.strip()
    if line.endswith("."):
        line = line[:-1]
    return line.strip() or None


_TRUE_WORDS = frozenset({"yes", "true"})
_FALSE_WORDS = frozenset({"no", "false"})


def _finalize(text: str, scale_hint: ScaleUnit | None) -> FinalAnswer:
    """Shape an extracted answer literal into a FinalAnswer."""
    scale = scale_hint if scale_hint is not None else ScaleUnit.NONE
    if text.startswith("["):
        try:
            items = ast.literal_eval(text)
        except (ValueError, SyntaxError):
            items = None
        if isinstance(items, list) and items:
            spans = tuple(str(item) for item in items)
            if len(spans) == 1:
                return FinalAnswer(AnswerKind.SPAN, spans[0], scale, raw=text)
            return FinalAnswer(AnswerKind.MULTISPAN, spans, scale, raw=text)
    lowered = text.strip().casefold()
    if lowered in _TRUE_WORDS or lowered in _FALSE_WORDS:
        return FinalAnswer(AnswerKind.BOOLEAN, lowered in _TRUE_WORDS, scale, raw=text)
    parsed = parse_number(text)
    if parsed is not None:
        value, parsed_scale = parsed
        if scale_hint is None and parsed_scale is not ScaleUnit.NONE:
            scale = parsed_scale
        return FinalAnswer(AnswerKind.NUMERIC, value, scale, raw=text)
    return FinalAnswer(AnswerKind.SPAN, text, scale, raw=text)


def _generate_answer(state: ToolState) -> FinalAnswer:
    """Deterministic final-answer extraction, in priority order."""
    slot = state.answer
    scale = slot.scale
    if slot.kind is SlotKind.EXECUTION:
        value = slot.value
        if isinstance(value, Decimal):
            return FinalAnswer(
                AnswerKind.NUMERIC, value, scale or ScaleUnit.NONE, raw=render_number(value)
            )
        return _finalize(str(value), scale)
    if slot.kind is SlotKind.SPANS:
        assert isinstance(slot.value, tuple)
        items = slot.value
        if len(items) == 1:
            return _finalize(items[0], scale)
        return FinalAnswer(
            AnswerKind.MULTISPAN, items, scale or ScaleUnit.NONE, raw=render_slot(slot)
        )
    sources = []
    if slot.kind is SlotKind.SOLUTION and isinstance(slot.value, str):
        sources.append(slot.value)
    sources.append(state.context)
    for source in sources:
        extracted = _answer_sentence(source)
        if extracted is not None:
            return _finalize(extracted, scale)
    raise ParseError(ToolId.ANSWER_GENERATOR, "no answer material in state")


class ToolRuntime:
    """Bindings + backend wiring needed to apply tools and run plans."""

    def __init__(
        self,
        bindings: dict[ToolId, ToolBinding],
        client,
        routing: RoutingTable | None = None,
        phase: Phase = Phase.PE,
        temperature: float = 0.0,
        max_tokens: int = 1024,
        limits: ExecLimits | None = None,
    ) -> None:
        self.bindings = bindings
        self.client = client
        self.routing = routing or RoutingTable.default()
        self.phase = phase
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.limits = limits or ExecLimits()

    # -- single step ------------------------------------------------------

    def apply_tool_recorded(self, tool: ToolId, state: ToolState) -> StepRecord:
        binding = self.bindings[tool]
        call = None
        report = None
        if binding.kind is BindingKind.LLM:
            prompt = render_tool_prompt(binding, state)
            adapter = self.routing.route(binding.adapter, self.phase)
            request = ChatRequest.for_prompt(
                adapter, prompt, temperature=self.temperature, max_tokens=self.max_tokens
            )
            call = self.client.complete(request)
            payload = parse_tool_output(tool, call.response)
        else:
            payload = None

        slot = state.answer
        if tool in (ToolId.ROW_LOOKUP, ToolId.COLUMN_LOOKUP):
            try:
                table = parse_table(payload)
            except EmptyTableError as exc:
                raise ParseError(tool, str(exc)) from None
            report = check_subtable(table, state.table)
            new_state = replace(state, table=table)
        elif tool is ToolId.CONTEXT_EXTRACTOR:
            new_state = replace(state, context=payload)
        elif tool is ToolId.KNOWLEDGE_RETRIEVAL:
            section = f"KNOWLEDGE:\n{payload}"
            joined = f"{state.context}\n\n{section}" if state.context else section
            new_state = replace(state, context=joined)
        elif tool is ToolId.SPAN_EXTRACTOR:
            new_state = replace(state, answer=AnswerSlot(SlotKind.SPANS, payload, slot.scale))
        elif tool is ToolId.SOLUTION_GENERATOR:
            new_state = replace(state, answer=AnswerSlot(SlotKind.SOLUTION, payload, slot.scale))
        elif tool is ToolId.PROGRAM_GENERATOR_AND_VERIFIER:
            new_state = replace(state, answer=AnswerSlot(SlotKind.PROGRAM, payload, slot.scale))
        elif tool is ToolId.SCALE_FINDER:
            new_state = replace(state, answer=slot.with_scale(payload))
        elif tool is ToolId.PROGRAM_EXECUTOR:
            if slot.kind is not SlotKind.PROGRAM or not isinstance(slot.value, str):
                raise ParseError(tool, "state holds no program to execute")
            try:
                program = parse_program(slot.value)
            except (LexError, ProgramSyntaxError) as exc:
                raise ParseError(tool, f"stored program does not parse: {exc}") from None
            result = execute_program(program, self.limits)
            if not isinstance(result, Decimal):
                result = render_value(result)
            new_state = replace(state, answer=AnswerSlot(SlotKind.EXECUTION, result, slot.scale))
        elif tool is ToolId.ANSWER_GENERATOR:
            final = _generate_answer(state)
            new_state = replace(state, answer=AnswerSlot.final(final))
        else:  # pragma: no cover
            raise ValueError(f"unhandled tool {tool}")
        return StepRecord(
            tool=tool,
            input=state,
            output=new_state,
            digest=call.digest if call is not None else None,
            subtable=report,
        )

    def apply_tool(self, tool: ToolId, state: ToolState) -> ToolState:
        return self.apply_tool_recorded(tool, state).output

    # -- whole plan -------------------------------------------------------

    def run_trajectory(self, instance: ProblemInstance, plan: Trajectory) -> TrajectoryRecord:
        """Fold the plan over the instance; capture any failure in-record."""
        state = initial_state(instance)
        steps: list[StepRecord] = []
        failure: FailureReason | None = None
        for i, tool in enumerate(plan):
            try:
                step = self.apply_tool_recorded(tool, state)
            except (BackendError, Timeout, CassetteMiss) as exc:
                failure = FailureReason(FailureKind.BACKEND, i, str(exc))
                break
            except ParseError as exc:
                failure = FailureReason(FailureKind.PARSE, i, str(exc))
                break
            except ExecError as exc:
                failure = FailureReason(FailureKind.EXEC, i, str(exc))
                break
            steps.append(step)
            state = step.output
            if tool is ToolId.ANSWER_GENERATOR:
                break
        predicted = None
        if state.answer.kind is SlotKind.FINAL and isinstance(state.answer.value, FinalAnswer):
            predicted = state.answer.value
        return TrajectoryRecord(
            instance_id=instance.instance_id,
            dataset=instance.dataset,
            plan=plan,
            steps=tuple(steps),
            predicted=predicted,
            failure=failure,
            category=instance.category,
        )


def run_trajectory(
    instance: ProblemInstance,
    plan: Trajectory,
    bindings: dict[ToolId, ToolBinding],
    client,
    **kwargs,
) -> TrajectoryRecord:
    return ToolRuntime(bindings, client, **kwargs).run_trajectory(instance, plan)
