"""Answer normalization, tolerant comparison, and run scoring.

The end-to-end weak label is the only training signal, so everything here
errs on the side of accepting honest formatting differences (currency
symbols, digit-group commas, scale words, percent-vs-fraction) while never
bending actual values beyond a small, gold-derived tolerance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping

from .model import (
    NEGATIVE,
    POSITIVE,
    AnswerKind,
    DatasetKind,
    FinalAnswer,
    GoldAnswer,
    ScaleUnit,
    TrajectoryRecord,
    WeakLabel,
)

METRIC_NAMES: Mapping[DatasetKind, str] = {
    DatasetKind.FINQA: "Acc",
    DatasetKind.TATQA: "EM",
    DatasetKind.TABMWP: "Acc",
}

_SCALE_TOKENS = {unit.value: unit for unit in ScaleUnit}
_CURRENCY = "$€£"
_GROUP_COMMA = re.compile(r"(?<=\d),(?=\d)")
_WS = re.compile(r"\s+")

# One number with optional sign, currency, digit grouping, percent sign or
# scale word, and accountant's parentheses for negatives.
_NUMBER = re.compile(
    r"""^\s*
        [$€£]?\s*
        (?P<paren>\()?\s*
        (?P<sign>[-+−])?\s*
        [$€£]?\s*
        (?P<body>(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)
        \s*(?P<pct>%)?
        \s*(?(paren)\))\s*(?P<pct2>%)?
        \s*(?P<scale>thousand|million|billion|percent)?
        \s*\.?\s*$""",
    re.IGNORECASE | re.VERBOSE,
)

_TRUE_WORDS = frozenset({"yes", "true"})
_FALSE_WORDS = frozenset({"no", "false"})

# Relative slack applied against the gold magnitude.
RELATIVE_TOLERANCE = Decimal("1e-4")


class EmptyRun(ValueError):
    """score_run was handed no records."""


def validate_scale_checked(token: str) -> tuple[ScaleUnit, bool]:
    """Map a scale token to its unit, flagging off-vocabulary tokens.

    Tokens arrive quoted ('million'), bare (percent), or empty ('').
    Anything outside the closed vocabulary maps to no scale; the flag says
    whether the token was actually recognized.
    """
    cleaned = token.strip()
    if len(cleaned) >= 2 and cleaned[0] == cleaned[-1] and cleaned[0] in "'\"":
        cleaned = cleaned[1:-1]
    unit = _SCALE_TOKENS.get(cleaned.strip().casefold())
    if unit is None:
        return ScaleUnit.NONE, False
    return unit, True


def validate_scale(token: str) -> ScaleUnit:
    return validate_scale_checked(token)[0]


def normalize_text(text: str) -> str:
    """Casefold, drop currency marks and digit-group commas, squeeze spaces."""
    out = text.casefold()
    for ch in _CURRENCY:
        out = out.replace(ch, "")
    out = _GROUP_COMMA.sub("", out)
    return _WS.sub(" ", out).strip()


def parse_number(text: str) -> tuple[Decimal, ScaleUnit] | None:
    """Read one numeric literal with its unit, or None if it isn't one."""
    m = _NUMBER.match(text)
    if not m:
        return None
    try:
        value = Decimal(m.group("body").replace(",", ""))
    except InvalidOperation:  # pragma: no cover - regex should prevent this
        return None
    if m.group("sign") or m.group("paren"):
        value = -value
    scale = ScaleUnit.NONE
    if m.group("pct") or m.group("pct2"):
        scale = ScaleUnit.PERCENT
    word = m.group("scale")
    if word:
        if scale is ScaleUnit.PERCENT:
            return None  # "% thousand" is noise, not a number
        scale = _SCALE_TOKENS[word.casefold()]
    return value, scale


def decimals_in(literal: str) -> int:
    """Decimal places of the last number written in ``literal``."""
    matches = re.findall(r"\d(?:[\d,]*\d)?(?:\.(\d+))?", literal)
    if not matches:
        return 0
    frac = matches[-1]
    return len(frac)


def numeric_tolerance(gold_raw: str, gold_folded: Decimal) -> Decimal:
    """Half-unit-in-last-place of the gold literal, or relative slack."""
    d = decimals_in(gold_raw)
    half_ulp = Decimal(5) * Decimal(10) ** -(d + 1)
    return max(half_ulp, RELATIVE_TOLERANCE * abs(gold_folded))


def _fold(value: Decimal, scale: ScaleUnit) -> Decimal:
    return value * scale.multiplier


def _as_number(value, scale: ScaleUnit) -> tuple[Decimal, ScaleUnit] | None:
    """Coerce a kind-shaped answer value to (number, unit) if possible."""
    if isinstance(value, bool):
        return None
    if isinstance(value, Decimal):
        return value, scale
    if isinstance(value, tuple):
        if len(value) != 1:
            return None
        value = value[0]
    if isinstance(value, str):
        parsed = parse_number(value)
        if parsed is None:
            return None
        number, parsed_scale = parsed
        # a unit written in the text wins over the slot annotation
        if parsed_scale is not ScaleUnit.NONE:
            return number, parsed_scale
        return number, scale
    return None


def _numbers_match(
    pred: Decimal, gold: Decimal, tol: Decimal, percent_involved: bool
) -> bool:
    if abs(pred - gold) <= tol:
        return True
    if percent_involved:
        # a percentage may be stated as its fraction and vice versa
        if abs(pred / 100 - gold) <= tol or abs(pred * 100 - gold) <= tol:
            return True
    return False


def _as_spans(value) -> tuple[str, ...] | None:
    if isinstance(value, tuple):
        return tuple(str(v) for v in value)
    if isinstance(value, str):
        return (value,)
    if isinstance(value, Decimal):
        return (str(value),)
    return None


def _as_boolean(value) -> bool | None:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        word = normalize_text(value).rstrip(".")
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
    return None


def answers_equal(predicted: FinalAnswer | None, gold: GoldAnswer) -> bool:
    """Tolerant equality between a predicted final answer and the gold one."""
    if predicted is None:
        return False

    if gold.kind is AnswerKind.NUMERIC:
        assert isinstance(gold.value, Decimal)
        pred_num = _as_number(predicted.value, predicted.scale)
        if pred_num is None:
            return False
        pv, ps = pred_num
        gv, gs = gold.value, gold.scale
        percent_involved = (
            ps is ScaleUnit.PERCENT or gs is ScaleUnit.PERCENT or "%" in gold.raw
        )
        folded_gold = _fold(gv, gs)
        tol = numeric_tolerance(gold.raw or str(gv), folded_gold)
        return _numbers_match(_fold(pv, ps), folded_gold, tol, percent_involved)

    if gold.kind is AnswerKind.BOOLEAN:
        pred_bool = _as_boolean(predicted.value)
        return pred_bool is not None and pred_bool is bool(gold.value)

    if gold.kind is AnswerKind.MULTISPAN:
        assert isinstance(gold.value, tuple)
        pred_spans = _as_spans(predicted.value)
        if pred_spans is None:
            return False
        left = sorted(normalize_text(s) for s in pred_spans)
        right = sorted(normalize_text(s) for s in gold.value)
        return left == right

    # span and choice answers compare as normalized text, with a numeric
    # fallback so "5.50" still matches a gold span of "5.5"
    gold_text = gold.value if isinstance(gold.value, str) else str(gold.value)
    pred_spans = _as_spans(predicted.value)
    if pred_spans is None or len(pred_spans) != 1:
        return False
    if normalize_text(pred_spans[0]) == normalize_text(gold_text):
        return True
    pred_num = _as_number(predicted.value, predicted.scale)
    gold_num = parse_number(gold_text)
    if pred_num is not None and gold_num is not None:
        gv = _fold(*gold_num)
        tol = numeric_tolerance(gold_text, gv)
        percent_involved = (
            pred_num[1] is ScaleUnit.PERCENT or gold_num[1] is ScaleUnit.PERCENT
        )
        return _numbers_match(_fold(*pred_num), gv, tol, percent_involved)
    return False


def compare_answers(predicted: FinalAnswer | None, gold: GoldAnswer) -> WeakLabel:
    """The weak-supervision signal: positive iff the answers agree.

    A missing prediction (failed trajectory) and incomparable kinds are
    both negative; nothing here raises.
    """
    return POSITIVE if answers_equal(predicted, gold) else NEGATIVE


derive_label = compare_answers


def _pct(part: int, whole: int) -> float:
    return float((Decimal(part) * 100 / Decimal(whole)).quantize(Decimal("0.01")))


@dataclass(frozen=True)
class MetricReport:
    dataset: DatasetKind
    metric: str
    total: int
    correct: int
    incorrect: int
    correct_pct: float
    incorrect_pct: float
    by_category: dict[str, dict[str, float]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "dataset": self.dataset.value,
            "metric": self.metric,
            "total": self.total,
            "correct": self.correct,
            "incorrect": self.incorrect,
            "correct_pct": self.correct_pct,
            "incorrect_pct": self.incorrect_pct,
            "by_category": {k: dict(v) for k, v in sorted(self.by_category.items())},
        }


def score_run(records: Iterable[TrajectoryRecord], dataset: DatasetKind) -> MetricReport:
    """Aggregate weak labels into the dataset's headline metric."""
    total = correct = 0
    cats: dict[str, list[int]] = {}
    for record in records:
        if record.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"record {record.instance_id} has no label")
        total += 1
        won = record.label == POSITIVE
        correct += won
        if record.category is not None:
            bucket = cats.setdefault(record.category, [0, 0])
            bucket[0] += 1
            bucket[1] += won
    if total == 0:
        raise EmptyRun("cannot score a run with no records")
    by_category = {
        cat: {"total": n, "correct": c, "correct_pct": _pct(c, n)}
        for cat, (n, c) in cats.items()
    }
    return MetricReport(
        dataset=dataset,
        metric=METRIC_NAMES[dataset],
        total=total,
        correct=correct,
        incorrect=total - correct,
        correct_pct=_pct(correct, total),
        incorrect_pct=_pct(total - correct, total),
        by_category=by_category,
    )


def format_metric_block(report: MetricReport) -> str:
    """Flat key/value text rendering of a report, one line per figure."""
    lines = [
        f"dataset: {report.dataset.value}",
        f"metric: {report.metric}",
        f"total: {report.total}",
        f"correct: {report.correct}",
        f"incorrect: {report.incorrect}",
        f"correct_pct: {report.correct_pct:.2f}",
        f"incorrect_pct: {report.incorrect_pct:.2f}",
    ]
    for category in sorted(report.by_category):
        bucket = report.by_category[category]
        lines.append(
            f"by_category.{category}: total={int(bucket['total'])} "
            f"correct={int(bucket['correct'])} correct_pct={bucket['correct_pct']:.2f}"
        )
    return "\n".join(lines)
