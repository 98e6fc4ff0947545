"""Dataset loading, trajectory persistence, training exports, and run manifests.

This module owns every on-disk format the pipeline touches: the three
source-dataset layouts, the trajectory JSONL schema, the per-tool
instruction-tuning and preference exports, and the run manifest document.
All JSONL lines are written with sorted keys and compact separators so
identical content yields identical bytes.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Iterable, Mapping

from tabreason.answers import MetricReport, parse_number, validate_scale
from tabreason.model import (
    NEGATIVE,
    POSITIVE,
    AnswerKind,
    AnswerSlot,
    DatasetKind,
    FailureKind,
    FailureReason,
    FinalAnswer,
    GoldAnswer,
    Phase,
    ProblemInstance,
    ScaleUnit,
    SlotKind,
    StepRecord,
    ToolId,
    ToolState,
    TrajectoryRecord,
    WeakLabel,
)
from tabreason.tables import EmptyTableError, parse_table, render_table, table_from_rows

PLANNER_NAME = "planner"
_DECIMAL_TAG = "$decimal"


class IoError(Exception):
    """File unreadable or not decodable as the expected container format."""


class SchemaError(ValueError):
    """A required field is missing or malformed in one item."""

    def __init__(self, field_name: str, item_id: str, message: str = ""):
        self.field = field_name
        self.item_id = item_id
        super().__init__(f"{field_name} ({item_id}): {message or 'missing or malformed'}")


class MixedLabelError(ValueError):
    """An instruction-tuning export received a pair from a negative trajectory."""


# ---------------------------------------------------------------------------
# source-dataset loaders


def _read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"{path} is not valid JSON: {exc}") from exc


def _require(mapping: Any, key: str, item_id: str) -> Any:
    if not isinstance(mapping, Mapping) or key not in mapping:
        raise SchemaError(key, item_id)
    return mapping[key]


def _decimal(value: Any, field_name: str, item_id: str) -> Decimal:
    # tolerate digit grouping and stray whitespace in numeric literals
    try:
        return Decimal(str(value).replace(",", "").strip())
    except InvalidOperation as exc:
        raise SchemaError(field_name, item_id, f"not numeric: {value!r}") from exc


def load_dataset(kind: DatasetKind, path: str | Path, split: str) -> list[ProblemInstance]:
    """Load one source dataset file into ProblemInstances."""
    return _LOADERS[kind](path, split)


def _load_finqa(path: str | Path, split: str) -> list[ProblemInstance]:
    data = _read_json(path)
    if not isinstance(data, list):
        raise IoError(f"{path}: expected a JSON array of examples")
    out: list[ProblemInstance] = []
    for entry in data:
        item_id = str(_require(entry, "id", "?"))
        pre = _require(entry, "pre_text", item_id)
        post = _require(entry, "post_text", item_id)
        qa = _require(entry, "qa", item_id)
        question = str(_require(qa, "question", item_id))
        try:
            table = table_from_rows(_require(entry, "table", item_id))
        except (EmptyTableError, TypeError, AttributeError) as exc:
            raise SchemaError("table", item_id, str(exc)) from exc
        context = "\n".join(
            str(line).strip() for line in [*pre, *post] if str(line).strip()
        )
        out.append(
            ProblemInstance(
                instance_id=item_id,
                dataset=DatasetKind.FINQA,
                split=split,
                question=question,
                context=context,
                table=table,
                gold=_finqa_gold(qa, item_id),
            )
        )
    return out


def _finqa_gold(qa: Mapping, item_id: str) -> GoldAnswer:
    # the executable answer is the labeling target; the display answer only
    # pins tolerance digits, and the program rides along as a derivation
    exe = _require(qa, "exe_ans", item_id)
    raw = str(qa.get("answer", "")).strip() or str(exe)
    derivation = str(qa["program"]) if qa.get("program") else None
    if isinstance(exe, bool):
        return GoldAnswer(AnswerKind.BOOLEAN, exe, raw=raw, derivation=derivation)
    if isinstance(exe, (int, float)):
        value = Decimal(str(exe))
        return GoldAnswer(AnswerKind.NUMERIC, value, raw=raw, derivation=derivation)
    token = str(exe).strip()
    if token.casefold() in ("yes", "true"):
        return GoldAnswer(AnswerKind.BOOLEAN, True, raw=raw, derivation=derivation)
    if token.casefold() in ("no", "false"):
        return GoldAnswer(AnswerKind.BOOLEAN, False, raw=raw, derivation=derivation)
    parsed = parse_number(token)
    if parsed is not None:
        value, unit = parsed
        return GoldAnswer(AnswerKind.NUMERIC, value, scale=unit, raw=raw, derivation=derivation)
    return GoldAnswer(AnswerKind.SPAN, token, raw=raw, derivation=derivation)


def _load_tatqa(path: str | Path, split: str) -> list[ProblemInstance]:
    data = _read_json(path)
    if not isinstance(data, list):
        raise IoError(f"{path}: expected a JSON array of table blocks")
    out: list[ProblemInstance] = []
    for block in data:
        table_obj = _require(block, "table", "?")
        block_id = str(table_obj.get("uid", "?")) if isinstance(table_obj, Mapping) else "?"
        try:
            table = table_from_rows(_require(table_obj, "table", block_id))
        except (EmptyTableError, TypeError, AttributeError) as exc:
            raise SchemaError("table", block_id, str(exc)) from exc
        paragraphs = _require(block, "paragraphs", block_id)
        ordered = sorted(paragraphs, key=lambda p: p.get("order", 0))
        context = "\n".join(
            str(p.get("text", "")).strip() for p in ordered if str(p.get("text", "")).strip()
        )
        for q in _require(block, "questions", block_id):
            uid = str(_require(q, "uid", block_id))
            answer_type = str(_require(q, "answer_type", uid))
            answer_from = str(q.get("answer_from", "")).strip()
            category = f"{answer_type}/{answer_from}" if answer_from else answer_type
            out.append(
                ProblemInstance(
                    instance_id=uid,
                    dataset=DatasetKind.TATQA,
                    split=split,
                    question=str(_require(q, "question", uid)),
                    context=context,
                    table=table,
                    gold=_tatqa_gold(q, answer_type, uid),
                    category=category,
                )
            )
    return out


def _tatqa_gold(q: Mapping, answer_type: str, uid: str) -> GoldAnswer:
    answer = _require(q, "answer", uid)
    unit = validate_scale(str(q.get("scale", "")))
    derivation = str(q["derivation"]) if q.get("derivation") else None
    if answer_type in ("arithmetic", "count"):
        scalar = answer[0] if isinstance(answer, list) and len(answer) == 1 else answer
        value = _decimal(scalar, "answer", uid)
        return GoldAnswer(AnswerKind.NUMERIC, value, scale=unit, raw=str(scalar), derivation=derivation)
    if answer_type == "multi-span":
        items = tuple(str(x).strip() for x in answer) if isinstance(answer, list) else (str(answer),)
        if not items:
            raise SchemaError("answer", uid, "empty multi-span answer")
        raw = json.dumps(list(items), ensure_ascii=False)
        return GoldAnswer(AnswerKind.MULTISPAN, items, scale=unit, raw=raw, derivation=derivation)
    if answer_type == "span":
        items = [str(x).strip() for x in answer] if isinstance(answer, list) else [str(answer).strip()]
        if not items:
            raise SchemaError("answer", uid, "empty span answer")
        if len(items) > 1:
            raw = json.dumps(items, ensure_ascii=False)
            return GoldAnswer(AnswerKind.MULTISPAN, tuple(items), scale=unit, raw=raw, derivation=derivation)
        return GoldAnswer(AnswerKind.SPAN, items[0], scale=unit, raw=items[0], derivation=derivation)
    raise SchemaError("answer_type", uid, f"unknown answer_type {answer_type!r}")


def _load_tabmwp(path: str | Path, split: str) -> list[ProblemInstance]:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise IoError(f"{path}: expected a JSON object keyed by problem id")
    out: list[ProblemInstance] = []
    for item_id, prob in data.items():
        item_id = str(item_id)
        question = str(_require(prob, "question", item_id))
        answer = str(_require(prob, "answer", item_id))
        choices = prob.get("choices")
        if choices:
            question = f"{question}\nOptions: {', '.join(str(c) for c in choices)}"
        try:
            table = parse_table(str(_require(prob, "table", item_id)))
        except EmptyTableError as exc:
            raise SchemaError("table", item_id, str(exc)) from exc
        title = str(prob.get("table_title") or "").strip()
        out.append(
            ProblemInstance(
                instance_id=item_id,
                dataset=DatasetKind.TABMWP,
                split=split,
                question=question,
                context=title,
                table=table,
                gold=_tabmwp_gold(answer, choices, item_id),
                category=str(prob.get("ans_type")) if prob.get("ans_type") else None,
            )
        )
    return out


def _tabmwp_gold(answer: str, choices: Any, item_id: str) -> GoldAnswer:
    if choices:
        return GoldAnswer(AnswerKind.CHOICE, answer, raw=answer)
    parsed = parse_number(answer)
    if parsed is None:
        raise SchemaError("answer", item_id, f"expected numeric or choice, got {answer!r}")
    value, unit = parsed
    return GoldAnswer(AnswerKind.NUMERIC, value, scale=unit, raw=answer)


_LOADERS = {
    DatasetKind.FINQA: _load_finqa,
    DatasetKind.TATQA: _load_tatqa,
    DatasetKind.TABMWP: _load_tabmwp,
}


def load_data_manifest(path: str | Path) -> dict[str, dict[str, Path]]:
    """Read a dataset-discovery config: {dataset: {split: file path}}.

    Relative paths resolve against the manifest's own directory. Data
    files are never bundled; this is the only discovery mechanism.
    """
    path = Path(path)
    data = _read_json(path)
    if not isinstance(data, dict):
        raise IoError(f"{path}: expected an object mapping dataset to splits")
    out: dict[str, dict[str, Path]] = {}
    for name, splits in data.items():
        if not isinstance(splits, Mapping):
            raise SchemaError(name, str(path), "expected {split: path}")
        out[name] = {
            split: (path.parent / Path(p)).resolve() for split, p in splits.items()
        }
    return out


def resolve_split(
    manifest: Mapping[str, Mapping[str, Path]], kind: DatasetKind, split: str
) -> Path:
    try:
        return Path(manifest[kind.value][split])
    except KeyError:
        raise IoError(f"data manifest has no entry for {kind.value}/{split}") from None


# ---------------------------------------------------------------------------
# trajectory record wire format


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"


def _final_to_json(ans: FinalAnswer) -> dict:
    value: Any = ans.value
    if isinstance(value, Decimal):
        value = str(value)
    elif isinstance(value, tuple):
        value = list(value)
    return {"kind": ans.kind.value, "value": value, "scale": ans.scale.value}


def _final_from_json(obj: Any, item_id: str) -> FinalAnswer:
    try:
        kind = AnswerKind(obj["kind"])
        value = obj["value"]
        scale = ScaleUnit(obj.get("scale", ""))
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError("predicted", item_id, str(exc)) from exc
    if kind is AnswerKind.NUMERIC:
        try:
            value = Decimal(str(value))
        except InvalidOperation as exc:
            raise SchemaError("predicted", item_id, f"not numeric: {value!r}") from exc
    elif kind is AnswerKind.MULTISPAN:
        if not isinstance(value, list):
            raise SchemaError("predicted", item_id, "multispan value must be a list")
        value = tuple(str(x) for x in value)
    elif kind is AnswerKind.BOOLEAN:
        value = bool(value)
    else:
        value = str(value)
    return FinalAnswer(kind, value, scale)


def _slot_to_json(slot: AnswerSlot) -> dict:
    value: Any = slot.value
    if isinstance(value, FinalAnswer):
        value = _final_to_json(value)
    elif isinstance(value, Decimal):
        value = {_DECIMAL_TAG: str(value)}
    elif isinstance(value, tuple):
        value = list(value)
    return {
        "kind": slot.kind.value,
        "value": value,
        "scale": slot.scale.value if slot.scale is not None else None,
    }


def _slot_from_json(obj: Any, item_id: str) -> AnswerSlot:
    try:
        kind = SlotKind(obj["kind"])
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError("answer_slot", item_id, str(exc)) from exc
    raw_scale = obj.get("scale")
    scale = ScaleUnit(raw_scale) if raw_scale is not None else None
    value: Any = obj.get("value")
    if kind is SlotKind.FINAL:
        value = _final_from_json(value, item_id)
    elif isinstance(value, dict) and _DECIMAL_TAG in value:
        value = Decimal(value[_DECIMAL_TAG])
    elif isinstance(value, list):
        value = tuple(str(x) for x in value)
    return AnswerSlot(kind, value, scale)


def _state_to_json(state: ToolState) -> dict:
    return {
        "q": state.question,
        "c": state.context,
        "table_text": render_table(state.table),
        "answer_slot": _slot_to_json(state.answer),
    }


def _state_from_json(obj: Any, item_id: str) -> ToolState:
    try:
        table = parse_table(str(_require(obj, "table_text", item_id)))
    except EmptyTableError as exc:
        raise SchemaError("table_text", item_id, str(exc)) from exc
    return ToolState(
        question=str(_require(obj, "q", item_id)),
        context=str(_require(obj, "c", item_id)),
        table=table,
        answer=_slot_from_json(_require(obj, "answer_slot", item_id), item_id),
    )


def _tool_from_token(token: Any, field_name: str, item_id: str) -> ToolId:
    try:
        return ToolId.from_token(str(token))
    except KeyError:
        raise SchemaError(field_name, item_id, f"unknown tool {token!r}") from None


def _check_label(label: Any, item_id: str) -> WeakLabel:
    # bool is an int subtype; True would otherwise pass as 1
    if isinstance(label, bool) or label not in (POSITIVE, NEGATIVE):
        raise SchemaError("label", item_id, f"label must be +1 or -1, got {label!r}")
    return label


def record_to_json(record: TrajectoryRecord) -> dict:
    """Serialize one trajectory record to its wire dict."""
    item_id = record.instance_id
    out: dict[str, Any] = {
        "id": item_id,
        "dataset": record.dataset.value,
        "plan": [t.wire for t in record.plan],
        "steps": [_step_to_json(s) for s in record.steps],
        "label": _check_label(record.label, item_id),
    }
    if record.predicted is not None:
        out["predicted"] = _final_to_json(record.predicted)
    if record.failure is not None:
        out["failure"] = {
            "kind": record.failure.kind.value,
            "step": record.failure.step,
            "message": record.failure.message,
        }
    if record.category is not None:
        out["category"] = record.category
    return out


def _step_to_json(step: StepRecord) -> dict:
    out: dict[str, Any] = {
        "tool": step.tool.wire,
        "input": _state_to_json(step.input),
        "output": _state_to_json(step.output),
    }
    if step.digest is not None:
        out["digest"] = step.digest
    return out


def record_from_json(obj: Any, line_no: int | None = None) -> TrajectoryRecord:
    where = f"line {line_no}" if line_no is not None else "?"
    if not isinstance(obj, dict):
        raise SchemaError("record", where, "each line must be a JSON object")
    item_id = str(obj.get("id", where))
    try:
        dataset = DatasetKind(_require(obj, "dataset", item_id))
    except ValueError as exc:
        raise SchemaError("dataset", item_id, str(exc)) from exc
    plan = tuple(
        _tool_from_token(t, "plan", item_id) for t in _require(obj, "plan", item_id)
    )
    steps = tuple(_step_from_json(s, item_id) for s in _require(obj, "steps", item_id))
    label = _check_label(_require(obj, "label", item_id), item_id)
    predicted = (
        _final_from_json(obj["predicted"], item_id) if obj.get("predicted") is not None else None
    )
    failure = None
    if obj.get("failure") is not None:
        f = obj["failure"]
        try:
            failure = FailureReason(
                kind=FailureKind(_require(f, "kind", item_id)),
                step=f.get("step"),
                message=str(f.get("message", "")),
            )
        except ValueError as exc:
            raise SchemaError("failure", item_id, str(exc)) from exc
    category = str(obj["category"]) if obj.get("category") is not None else None
    return TrajectoryRecord(
        instance_id=str(_require(obj, "id", item_id)),
        dataset=dataset,
        plan=plan,
        steps=steps,
        predicted=predicted,
        label=label,
        failure=failure,
        category=category,
    )


def _step_from_json(obj: Any, item_id: str) -> StepRecord:
    tool = _tool_from_token(_require(obj, "tool", item_id), "steps", item_id)
    digest = obj.get("digest")
    return StepRecord(
        tool=tool,
        input=_state_from_json(_require(obj, "input", item_id), item_id),
        output=_state_from_json(_require(obj, "output", item_id), item_id),
        digest=str(digest) if digest is not None else None,
    )


def write_trajectories(records: Iterable[TrajectoryRecord], path: str | Path) -> int:
    """Write records as JSONL. Returns the number of lines written."""
    lines = [_dump_line(record_to_json(r)) for r in records]
    try:
        Path(path).write_text("".join(lines), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return len(lines)


def read_trajectories(path: str | Path) -> list[TrajectoryRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    out: list[TrajectoryRecord] = []
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IoError(f"{path}:{i}: not valid JSON: {exc}") from exc
        out.append(record_from_json(obj, line_no=i))
    return out


# ---------------------------------------------------------------------------
# training exports


@dataclass(frozen=True, slots=True)
class ToolExample:
    """One prompt/completion pair for a tool adapter, tagged with its label."""

    tool: ToolId
    prompt: str
    completion: str
    label: WeakLabel
    instance_id: str
    template_version: int | None = None

    @property
    def name(self) -> str:
        return self.tool.wire

    @property
    def file_key(self) -> str:
        return self.tool.key


@dataclass(frozen=True, slots=True)
class PlannerExample:
    """One prompt/plan-line pair for the planner adapter."""

    prompt: str
    completion: str
    label: WeakLabel
    instance_id: str
    template_version: int | None = None

    @property
    def name(self) -> str:
        return PLANNER_NAME

    @property
    def file_key(self) -> str:
        return PLANNER_NAME


TrainingPair = ToolExample | PlannerExample


def _pair_line(pair: TrainingPair, with_label: bool) -> str:
    obj: dict[str, Any] = {
        "tool": pair.name,
        "prompt": pair.prompt,
        "completion": pair.completion,
        "id": pair.instance_id,
    }
    if pair.template_version is not None:
        obj["template_version"] = pair.template_version
    if with_label:
        obj["label"] = pair.label
    return _dump_line(obj)


def _write_grouped(
    pairs: Iterable[TrainingPair], directory: str | Path, with_label: bool
) -> dict[str, int]:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {directory}: {exc}") from exc
    grouped: dict[str, list[str]] = {}
    for pair in pairs:
        grouped.setdefault(pair.file_key, []).append(_pair_line(pair, with_label))
    counts: dict[str, int] = {}
    for key in sorted(grouped):
        lines = grouped[key]
        try:
            (directory / f"{key}.jsonl").write_text("".join(lines), encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {directory / key}: {exc}") from exc
        counts[key] = len(lines)
    return counts


def export_it(pairs: Iterable[TrainingPair], directory: str | Path) -> dict[str, int]:
    """Write per-tool instruction-tuning files. Positive pairs only.

    Returns {file key: line count}. One file per tool that occurs, plus
    the planner file; prompts arrive fully rendered so training sees the
    exact inference-time text.
    """
    pairs = list(pairs)
    for pair in pairs:
        if pair.label != POSITIVE:
            raise MixedLabelError(
                f"{pair.name} pair from {pair.instance_id} has label {pair.label}"
            )
    return _write_grouped(pairs, directory, with_label=False)


def export_kto(pairs: Iterable[TrainingPair], directory: str | Path) -> dict[str, int]:
    """Write per-tool preference files; every pair keeps its +1/-1 label."""
    return _write_grouped(pairs, directory, with_label=True)


def read_export(path: str | Path) -> list[dict]:
    """Read one export file back as dicts (secondary consumers parse these)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise IoError(f"{path}:{i}: not valid JSON: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# run manifest


@dataclass(frozen=True, slots=True)
class RunCounts:
    total: int
    positive: int
    negative: int
    failed: dict[str, int] = field(default_factory=dict)  # failure kind -> count

    def __post_init__(self) -> None:
        if self.total != self.positive + self.negative:
            raise ValueError(
                f"counts do not partition: {self.total} != {self.positive} + {self.negative}"
            )
        failed_total = sum(self.failed.values())
        if failed_total > self.negative:
            raise ValueError(
                f"failed count {failed_total} exceeds negative count {self.negative}"
            )

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "positive": self.positive,
            "negative": self.negative,
            "failed": dict(sorted(self.failed.items())),
        }


@dataclass(frozen=True, slots=True)
class RunManifest:
    """Summary document for one generation run.

    Deliberately timestamp-free: the run id derives from output content,
    so identical replays produce byte-identical manifests.
    """

    run_id: str
    phase: Phase
    dataset: str  # dataset token, or "all" for the concatenated regime
    split: str
    template_versions: dict[str, int]
    routing: dict[str, dict[str, str]]
    counts: RunCounts
    metric: MetricReport | None = None

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "phase": self.phase.value,
            "dataset": self.dataset,
            "split": self.split,
            "template_versions": dict(sorted(self.template_versions.items())),
            "routing": {k: dict(sorted(v.items())) for k, v in sorted(self.routing.items())},
            "counts": self.counts.as_dict(),
            "metric": self.metric.as_dict() if self.metric is not None else None,
        }


def derive_run_id(payload: str | bytes) -> str:
    """Content hash of a run's serialized trajectories; stable across replays."""
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]


def write_manifest(manifest: RunManifest, path: str | Path) -> None:
    text = json.dumps(manifest.as_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_manifest(path: str | Path) -> RunManifest:
    obj = _read_json(path)
    item_id = str(obj.get("run_id", "?")) if isinstance(obj, dict) else "?"
    if not isinstance(obj, dict):
        raise SchemaError("manifest", item_id, "expected a JSON object")
    try:
        phase = Phase(_require(obj, "phase", item_id))
    except ValueError as exc:
        raise SchemaError("phase", item_id, str(exc)) from exc
    counts_obj = _require(obj, "counts", item_id)
    try:
        counts = RunCounts(
            total=int(_require(counts_obj, "total", item_id)),
            positive=int(_require(counts_obj, "positive", item_id)),
            negative=int(_require(counts_obj, "negative", item_id)),
            failed={str(k): int(v) for k, v in counts_obj.get("failed", {}).items()},
        )
    except ValueError as exc:
        raise SchemaError("counts", item_id, str(exc)) from exc
    metric = _metric_from_dict(obj.get("metric"), item_id)
    return RunManifest(
        run_id=str(_require(obj, "run_id", item_id)),
        phase=phase,
        dataset=str(_require(obj, "dataset", item_id)),
        split=str(_require(obj, "split", item_id)),
        template_versions={
            str(k): int(v) for k, v in _require(obj, "template_versions", item_id).items()
        },
        routing={
            str(k): {str(a): str(b) for a, b in v.items()}
            for k, v in _require(obj, "routing", item_id).items()
        },
        counts=counts,
        metric=metric,
    )


def _metric_from_dict(obj: Any, item_id: str) -> MetricReport | None:
    if obj is None:
        return None
    try:
        return MetricReport(
            dataset=DatasetKind(obj["dataset"]),
            metric=str(obj["metric"]),
            total=int(obj["total"]),
            correct=int(obj["correct"]),
            incorrect=int(obj["incorrect"]),
            correct_pct=float(obj["correct_pct"]),
            incorrect_pct=float(obj["incorrect_pct"]),
            by_category={
                str(k): {str(a): float(b) for a, b in v.items()}
                for k, v in obj.get("by_category", {}).items()
            },
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError("metric", item_id, str(exc)) from exc
