"""Core value types shared by every stage of the pipeline.

Everything here is an immutable value: states are snapshots, records are
facts about a finished run. Mutation happens by building new values.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import TYPE_CHECKING, Literal

if TYPE_CHECKING:  # only for annotations; avoids import cycles
    from tabreason.tables import SubtableReport


class ToolId(enum.Enum):
    """The ten plannable tools, valued by their wire names."""

    ROW_LOOKUP = "Row_Lookup"
    COLUMN_LOOKUP = "Column_Lookup"
    CONTEXT_EXTRACTOR = "Context_Extractor"
    SPAN_EXTRACTOR = "Span_Extractor"
    KNOWLEDGE_RETRIEVAL = "Knowledge_Retrieval"
    PROGRAM_GENERATOR_AND_VERIFIER = "Program_Generator_And_Verifier"
    PROGRAM_EXECUTOR = "Program_Executor"
    SOLUTION_GENERATOR = "Solution_Generator"
    SCALE_FINDER = "Scale_Finder"
    ANSWER_GENERATOR = "Answer_Generator"

    @property
    def wire(self) -> str:
        return self.value

    @property
    def key(self) -> str:
        """Lowercase identifier used in file names and routing tables."""
        return self.value.lower()

    @property
    def deterministic(self) -> bool:
        return self in _DETERMINISTIC

    @classmethod
    def from_token(cls, token: str) -> "ToolId":
        """Resolve a plan token, accepting known synonyms. KeyError if unknown."""
        return _TOKEN_MAP[token]


_DETERMINISTIC = frozenset({ToolId.PROGRAM_EXECUTOR, ToolId.ANSWER_GENERATOR})

# Synonyms seen in the wild for the same tools; normalized on parse.
_ALIASES = {
    "Row_Extractor": ToolId.ROW_LOOKUP,
    "Column_Extractor": ToolId.COLUMN_LOOKUP,
    "Program_Generator": ToolId.PROGRAM_GENERATOR_AND_VERIFIER,
    "Answer_Extractor": ToolId.ANSWER_GENERATOR,
}
_TOKEN_MAP: dict[str, ToolId] = {t.value: t for t in ToolId} | _ALIASES

Trajectory = tuple[ToolId, ...]

WeakLabel = Literal[1, -1]
POSITIVE: WeakLabel = 1
NEGATIVE: WeakLabel = -1


class Phase(enum.Enum):
    """Training-data generation phases, valued by their config tokens."""

    PE = "PE"
    IT = "IT"
    IT_KTO = "IT+KTO"


class DatasetKind(enum.Enum):
    FINQA = "finqa"
    TATQA = "tatqa"
    TABMWP = "tabmwp"


class ScaleUnit(enum.Enum):
    NONE = ""
    THOUSAND = "thousand"
    MILLION = "million"
    BILLION = "billion"
    PERCENT = "percent"

    @property
    def multiplier(self) -> Decimal:
        """Fold-out factor; percent folds via /100 elsewhere, not here."""
        return _MULTIPLIERS[self]


_MULTIPLIERS = {
    ScaleUnit.NONE: Decimal(1),
    ScaleUnit.THOUSAND: Decimal(1000),
    ScaleUnit.MILLION: Decimal(10) ** 6,
    ScaleUnit.BILLION: Decimal(10) ** 9,
    ScaleUnit.PERCENT: Decimal(1),
}


@dataclass(frozen=True, slots=True)
class Table:
    """A rectangular grid of text cells.

    ``padded_rows`` lists indices of rows that arrived ragged and were
    padded with empty cells to the table width.
    """

    rows: tuple[tuple[str, ...], ...]
    padded_rows: tuple[int, ...] = field(default=(), compare=False)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    @property
    def is_empty(self) -> bool:
        return not self.rows


class AnswerKind(enum.Enum):
    NUMERIC = "numeric"
    SPAN = "span"
    MULTISPAN = "multispan"
    BOOLEAN = "boolean"
    CHOICE = "choice"


@dataclass(frozen=True, slots=True)
class GoldAnswer:
    """Reference answer as loaded from a dataset.

    ``value`` is kind-shaped: Decimal for numeric, str for span/choice,
    tuple[str, ...] for multispan, bool for boolean. ``raw`` keeps the
    source literal; ``derivation`` is diagnostic only and never labels.
    """

    kind: AnswerKind
    value: Decimal | str | tuple[str, ...] | bool
    scale: ScaleUnit = ScaleUnit.NONE
    raw: str = ""
    derivation: str | None = None


class SlotKind(enum.Enum):
    EMPTY = "empty"
    SOLUTION = "solution_text"
    PROGRAM = "program"
    EXECUTION = "execution_result"
    SCALE = "scale"
    SPANS = "spans"
    FINAL = "final"


@dataclass(frozen=True, slots=True)
class FinalAnswer:
    kind: AnswerKind
    value: Decimal | str | tuple[str, ...] | bool
    scale: ScaleUnit = ScaleUnit.NONE
    raw: str = field(default="", compare=False)  # source literal, diagnostic


@dataclass(frozen=True, slots=True)
class AnswerSlot:
    """Tagged working-answer cell of a tool state.

    ``scale`` rides along with whatever the slot holds so a scale found
    mid-trajectory is not lost when the value was produced earlier.
    """

    kind: SlotKind = SlotKind.EMPTY
    value: Decimal | str | tuple[str, ...] | FinalAnswer | None = None
    scale: ScaleUnit | None = None

    @classmethod
    def empty(cls) -> "AnswerSlot":
        return cls()

    @classmethod
    def solution(cls, text: str) -> "AnswerSlot":
        return cls(SlotKind.SOLUTION, text)

    @classmethod
    def program(cls, source: str) -> "AnswerSlot":
        return cls(SlotKind.PROGRAM, source)

    @classmethod
    def execution(cls, value: Decimal | str) -> "AnswerSlot":
        return cls(SlotKind.EXECUTION, value)

    @classmethod
    def spans(cls, items: tuple[str, ...]) -> "AnswerSlot":
        return cls(SlotKind.SPANS, items)

    @classmethod
    def final(cls, answer: FinalAnswer) -> "AnswerSlot":
        return cls(SlotKind.FINAL, answer, answer.scale)

    def with_scale(self, unit: ScaleUnit) -> "AnswerSlot":
        if self.kind is SlotKind.EMPTY:
            return AnswerSlot(SlotKind.SCALE, None, unit)
        return replace(self, scale=unit)


@dataclass(frozen=True, slots=True)
class ToolState:
    """Immutable snapshot of the working state between tool applications."""

    question: str
    context: str
    table: Table
    answer: AnswerSlot = field(default_factory=AnswerSlot.empty)


@dataclass(frozen=True, slots=True)
class ProblemInstance:
    """One question over one table, with optional surrounding text."""

    instance_id: str
    dataset: DatasetKind
    split: str
    question: str
    context: str
    table: Table
    gold: GoldAnswer
    category: str | None = None  # e.g. tatqa "arithmetic/table", for breakdowns


def initial_state(instance: ProblemInstance) -> ToolState:
    """Starting state: the instance's inputs with an empty answer slot."""
    return ToolState(
        question=instance.question,
        context=instance.context,
        table=instance.table,
        answer=AnswerSlot.empty(),
    )


def is_terminal(state: ToolState) -> bool:
    return state.answer.kind is SlotKind.FINAL


class FailureKind(enum.Enum):
    INVALID_PLAN = "invalid_plan"
    BACKEND = "backend"
    PARSE = "parse"
    EXEC = "exec"


@dataclass(frozen=True, slots=True)
class FailureReason:
    kind: FailureKind
    step: int | None  # index into the plan, None for plan-level failures
    message: str


@dataclass(frozen=True, slots=True)
class StepRecord:
    """One executed tool application, including its I/O snapshots.

    ``digest`` keys the backend exchange in the cassette; the subtable
    report is diagnostic only and excluded from equality so records
    round-trip through their wire form.
    """

    tool: ToolId
    input: ToolState
    output: ToolState
    digest: str | None = None
    subtable: "SubtableReport | None" = field(default=None, compare=False)


@dataclass(frozen=True, slots=True)
class TrajectoryRecord:
    """A finished (or failed) run of one plan on one instance."""

    instance_id: str
    dataset: DatasetKind
    plan: Trajectory
    steps: tuple[StepRecord, ...]
    predicted: FinalAnswer | None
    label: WeakLabel | None = None
    failure: FailureReason | None = None
    category: str | None = None


@dataclass(frozen=True, slots=True)
class TrainingConfig:
    """Hyperparameters handed to the trainer harness, with stock defaults."""

    learning_rate: float = 1e-5
    batch_size: int = 32
    epochs: int = 10
    lora_rank: int = 64
    lora_alpha: int = 32
    lora_dropout: float = 0.05
    kto_beta: float = 0.1
    desirable_weight: float = 1.0
    undesirable_weight: float = 1.0
