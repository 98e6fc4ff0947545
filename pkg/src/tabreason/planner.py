"""Prompt templates and the plan grammar.

A plan is a single line of tool names separated by spaces.  The planner
model produces that line as a completion; this module parses it back into
a :class:`~tabreason.model.Trajectory`, checks the composition rules, and
renders the few-shot prompts that elicit it (and every other tool call).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .model import ToolId, Trajectory

STOP_MARKER = "#END"

# Template files carry placeholders in this shape only.
_PLACEHOLDER = re.compile(r"\{([A-Z_]+)\}")
_FEWSHOT_MARK = "<<<FEWSHOT>>>"
_BODY_MARK = "<<<BODY>>>"

TEMPLATE_NAMES = (
    "planner",
    "row_lookup",
    "column_lookup",
    "context_extractor",
    "span_extractor",
    "solution_generator",
    "knowledge_retrieval",
    "program_generator_and_verifier",
    "scale_finder",
)


class TemplateError(ValueError):
    """Malformed template file or unsatisfied placeholder."""


class PlanError(ValueError):
    """Base class for plan parsing and validation failures."""


class UnknownTool(PlanError):
    def __init__(self, token: str) -> None:
        super().__init__(f"unknown tool token: {token!r}")
        self.token = token


class EmptyPlan(PlanError):
    def __init__(self) -> None:
        super().__init__("plan contains no tools")


class NoFinalAnswerGenerator(PlanError):
    def __init__(self) -> None:
        super().__init__("plan must end with Answer_Generator")


class ExecutorWithoutGenerator(PlanError):
    def __init__(self, position: int) -> None:
        super().__init__(
            "Program_Executor at position %d is not immediately preceded by "
            "Program_Generator_And_Verifier" % position
        )
        self.position = position


class DuplicateTool(PlanError):
    def __init__(self, tool: ToolId) -> None:
        super().__init__(f"tool appears more than once: {tool.wire}")
        self.tool = tool


class GeneratorWithoutExecutor(PlanError):
    def __init__(self, position: int) -> None:
        super().__init__(
            "Program_Generator_And_Verifier at position %d is not immediately "
            "followed by Program_Executor" % position
        )
        self.position = position


@dataclass(frozen=True)
class PromptTemplate:
    """A few-shot block plus a query body with {UPPER_CASE} placeholders."""

    name: str
    version: int
    fewshot: str
    body: str

    @property
    def placeholders(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER.findall(self.body))


def load_template(path: Path) -> PromptTemplate:
    text = path.read_text(encoding="utf-8")
    head, sep, rest = text.partition(_FEWSHOT_MARK + "\n")
    if not sep:
        raise TemplateError(f"{path.name}: missing {_FEWSHOT_MARK} marker")
    header: dict[str, str] = {}
    for line in head.splitlines():
        k, sep2, v = line.partition(":")
        if not sep2:
            raise TemplateError(f"{path.name}: bad header line {line!r}")
        header[k.strip()] = v.strip()
    if "name" not in header or "version" not in header:
        raise TemplateError(f"{path.name}: header must declare name and version")
    fewshot, sep, body = rest.partition("\n" + _BODY_MARK + "\n")
    if not sep:
        raise TemplateError(f"{path.name}: missing {_BODY_MARK} marker")
    # Bodies end with a completion cue like "MODULES:"; the trailing file
    # newline is not part of the prompt.
    body = body.rstrip("\n")
    if any(ch in "{}" for ch in _PLACEHOLDER.sub("", body)):
        raise TemplateError(f"{path.name}: stray brace in body")
    try:
        version = int(header["version"])
    except ValueError:
        raise TemplateError(f"{path.name}: version must be an integer") from None
    return PromptTemplate(name=header["name"], version=version, fewshot=fewshot, body=body)


def default_template_dir() -> Path:
    return Path(str(resources.files("tabreason").joinpath("templates")))


def load_templates(directory: Path | None = None) -> dict[str, PromptTemplate]:
    """Load every known template; TemplateError if one is missing or bad."""
    directory = directory or default_template_dir()
    out: dict[str, PromptTemplate] = {}
    for name in TEMPLATE_NAMES:
        path = directory / f"{name}.txt"
        if not path.is_file():
            raise TemplateError(f"missing template file: {path}")
        tpl = load_template(path)
        if tpl.name != name:
            raise TemplateError(f"{path.name}: declared name {tpl.name!r} != {name!r}")
        out[name] = tpl
    return out


def prompt_values(
    question: str,
    context: str,
    table_text: str,
    solution: str | None = None,
) -> dict[str, str]:
    """Standard placeholder bindings for one problem state.

    CONTEXT_SECTION collapses to nothing when the context is empty, so
    table-only instances render without a dangling CONTEXT header.
    """
    values = {
        "QUESTION": question,
        "CONTEXT": context,
        "CONTEXT_SECTION": f"CONTEXT:\n{context}\n\n" if context.strip() else "",
        "TABLE": table_text,
    }
    if solution is not None:
        values["SOLUTION"] = solution
    return values


def render_prompt(template: PromptTemplate, values: Mapping[str, str]) -> str:
    """Few-shot block, blank line, then the filled query body.

    Substitution is a single pass: placeholder-like text inside the values
    themselves is left alone.
    """

    def fill(match: re.Match[str]) -> str:
        key = match.group(1)
        if key not in values:
            raise TemplateError(f"template {template.name!r}: no value for {{{key}}}")
        return values[key]

    return template.fewshot + "\n\n" + _PLACEHOLDER.sub(fill, template.body)


def parse_trajectory(text: str) -> Trajectory:
    """Parse a planner completion into a trajectory.

    Anything at or after the stop marker is discarded, then the first
    non-blank line is read as the plan.  A leading "MODULES:" echo and a
    trailing bare END token are tolerated because the few-shot examples
    contain both.
    """
    cut = text.find(STOP_MARKER)
    if cut >= 0:
        text = text[:cut]
    line = ""
    for candidate in text.splitlines():
        if candidate.strip():
            line = candidate.strip()
            break
    if line.startswith("MODULES:"):
        line = line[len("MODULES:") :].strip()
    tokens = line.split()
    if tokens and tokens[-1] == "END":
        tokens = tokens[:-1]
    if not tokens:
        raise EmptyPlan()
    plan = []
    for token in tokens:
        try:
            plan.append(ToolId.from_token(token))
        except KeyError:
            raise UnknownTool(token) from None
    return tuple(plan)


def format_trajectory(plan: Trajectory) -> str:
    """Canonical plan line: wire names joined by single spaces."""
    return " ".join(tool.wire for tool in plan)


def validate_trajectory(plan: Trajectory) -> None:
    """Raise the first composition violation, or return silently."""
    if not plan:
        raise EmptyPlan()
    seen: set[ToolId] = set()
    for tool in plan:
        if tool in seen:
            raise DuplicateTool(tool)
        seen.add(tool)
    if plan[-1] is not ToolId.ANSWER_GENERATOR:
        raise NoFinalAnswerGenerator()
    for i, tool in enumerate(plan):
        if tool is ToolId.PROGRAM_EXECUTOR:
            if i == 0 or plan[i - 1] is not ToolId.PROGRAM_GENERATOR_AND_VERIFIER:
                raise ExecutorWithoutGenerator(i)
        if tool is ToolId.PROGRAM_GENERATOR_AND_VERIFIER:
            if i + 1 >= len(plan) or plan[i + 1] is not ToolId.PROGRAM_EXECUTOR:
                raise GeneratorWithoutExecutor(i)


def repair_trajectory(plan: Trajectory) -> Trajectory:
    """Append the missing final Answer_Generator; fix nothing else."""
    if plan and ToolId.ANSWER_GENERATOR not in plan:
        return plan + (ToolId.ANSWER_GENERATOR,)
    return plan


def prepare_plan(text: str) -> Trajectory:
    """Parse, repair, validate. Raises PlanError subclasses on failure."""
    plan = repair_trajectory(parse_trajectory(text))
    validate_trajectory(plan)
    return plan
