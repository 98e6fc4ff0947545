"""Acceptance gate: one test per shipping criterion, one printed verdict each.

Each test prints a [PASS]/[FAIL] line through the capture plug so the
verdicts are visible in any pytest run. Tolerances are pinned inline;
the timed budgets are wall-clock on the machine running the suite.
"""
import json
import random
import string
from collections import Counter
from contextlib import contextmanager
from dataclasses import replace
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from time import perf_counter

import pytest

from tabreason.answers import (
    METRIC_NAMES,
    score_run,
    validate_scale,
    validate_scale_checked,
)
from tabreason.cli import main
from tabreason.datasets import load_data_manifest, load_dataset, read_export, read_trajectories, resolve_split, write_trajectories
from tabreason.interpreter import run_source
from tabreason.model import (
    NEGATIVE,
    POSITIVE,
    AnswerKind,
    AnswerSlot,
    DatasetKind,
    FailureKind,
    FailureReason,
    FinalAnswer,
    ScaleUnit,
    SlotKind,
    StepRecord,
    ToolId,
    TrajectoryRecord,
    initial_state,
)
from tabreason.pipeline import audit, extract_phase2, extract_phase4
from tabreason.planner import (
    ExecutorWithoutGenerator,
    PlanError,
    default_template_dir,
    format_trajectory,
    parse_trajectory,
    validate_trajectory,
)
from tabreason.tables import parse_table

from reference_eval import reference_eval
from test_interpreter import WORKED_EXAMPLES, _Gen, _agrees
from test_planner import random_valid_plan
from toyrun import build_golden_cassette, build_toy_run, make_instance, toy_dataset_file, write_golden_files


@contextmanager
def verdict(capsys, name: str):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"[FAIL] {name}", flush=True)
        raise
    with capsys.disabled():
        print(f"[PASS] {name}", flush=True)


def run_cli(argv: list[str]) -> int:
    return main(argv)


# ---------------------------------------------------------------------------
# 1. golden replay of the worked weighted-average figure


def test_golden_weighted_average_replay(tmp_path, capsys):
    with verdict(capsys, "golden replay: weighted average, scale thousand, positive, <1s"):
        manifest = write_golden_files(tmp_path)
        (instance,) = load_dataset(DatasetKind.TATQA, tmp_path / "tatqa_test.json", "test")
        cassette = tmp_path / "golden.jsonl"
        build_golden_cassette(cassette, instance)
        out_dir = tmp_path / "run"

        started = perf_counter()
        code = run_cli(
            [
                "generate",
                "--dataset", "tatqa",
                "--split", "test",
                "--out", str(out_dir),
                "--cassette", str(cassette),
                "--data", str(manifest),
            ]
        )
        elapsed = perf_counter() - started

        assert code == 0
        (record,) = read_trajectories(out_dir / "trajectories.jsonl")
        assert record.predicted is not None
        assert record.predicted.kind is AnswerKind.NUMERIC
        # interpreter-exact value of the generated program
        assert abs(record.predicted.value - Decimal("244738.976")) <= Decimal("0.01")
        assert record.predicted.scale is ScaleUnit.THOUSAND
        # and the displayed gold is within half a unit of it
        assert abs(record.predicted.value - Decimal("244738.8")) <= Decimal("0.5")
        assert record.label == POSITIVE
        assert [t.value for t in record.plan] == [
            "Row_Lookup",
            "Context_Extractor",
            "Program_Generator_And_Verifier",
            "Program_Executor",
            "Scale_Finder",
            "Answer_Generator",
        ]
        assert elapsed < 1.0, f"replay took {elapsed:.3f}s"


# ---------------------------------------------------------------------------
# 2. interpreter against an independent oracle


def test_interpreter_oracle_suite(capsys):
    with verdict(capsys, "interpreter: 1000 programs vs oracle at 1e-9, 5 worked programs, <10s"):
        started = perf_counter()

        def exactify(value):
            # fractional powers make the oracle return floats; a double's
            # rounding error is far below the 1e-9 comparison tolerance
            if isinstance(value, float):
                return Fraction(value)
            if isinstance(value, list):
                return [exactify(v) for v in value]
            return value

        rng = random.Random(8151)
        gen = _Gen(rng)
        kept = attempts = 0
        while kept < 1000:
            attempts += 1
            assert attempts < 6000, "generator rejection rate too high"
            source = gen.program()
            try:
                expected = exactify(reference_eval(source))
            except (ZeroDivisionError, OverflowError, IndexError, ValueError):
                continue
            got = run_source(source)
            assert _agrees(got, expected), f"oracle mismatch on:\n{source}"
            kept += 1

        # the five in-context programs plus the figure's weighted average,
        # against values derived by exact rational arithmetic
        derived = {
            Fraction(81): Decimal("81.0"),
            Fraction(18): Decimal("18.0"),
            Fraction(1140200, 99223): Decimal("11.4913"),
            Fraction(228528807, 50): Decimal("4570576.14"),
            Fraction(2610, 619): Decimal("4.2165"),
            Fraction(396232402, 1619): Decimal("244738.976"),
        }
        assert len(WORKED_EXAMPLES) == 6
        for source, exact in WORKED_EXAMPLES:
            value = run_source(source)
            assert abs(Fraction(value) - exact) <= Fraction(1, 10**9) * max(1, abs(exact))
            display = derived[exact]
            quantum = Decimal(10) ** display.as_tuple().exponent
            assert abs(value - display) <= quantum / 2

        elapsed = perf_counter() - started
        assert elapsed < 10.0, f"oracle suite took {elapsed:.3f}s"


# ---------------------------------------------------------------------------
# 3. plan grammar


def test_plan_grammar(capsys):
    with verdict(capsys, "plan grammar: exemplar lines valid, 10k round-trips, invalid rejected, <5s"):
        started = perf_counter()

        text = (default_template_dir() / "planner.txt").read_text(encoding="utf-8")
        exemplar_lines = [
            ln for ln in text.splitlines() if ln.startswith("MODULES:") and ln != "MODULES:"
        ]
        assert exemplar_lines, "planner template carries no exemplar plan lines"
        for line in exemplar_lines:
            validate_trajectory(parse_trajectory(line))

        rng = random.Random(411)
        tools = list(ToolId)
        for _ in range(10_000):
            plan = tuple(rng.choice(tools) for _ in range(rng.randint(1, 8)))
            assert parse_trajectory(format_trajectory(plan)) == plan

        rng = random.Random(412)
        for _ in range(500):
            plan = random_valid_plan(rng)
            validate_trajectory(plan)
            # executor without generator
            broken = tuple(t for t in plan if t is not ToolId.PROGRAM_GENERATOR_AND_VERIFIER)
            if ToolId.PROGRAM_EXECUTOR in broken:
                with pytest.raises(ExecutorWithoutGenerator):
                    validate_trajectory(broken)
            # missing final answer step
            with pytest.raises(PlanError):
                validate_trajectory(plan[:-1])

        elapsed = perf_counter() - started
        assert elapsed < 5.0, f"plan grammar checks took {elapsed:.3f}s"


# ---------------------------------------------------------------------------
# 4. partition and conservation over a randomized synthetic run


_SMALL_TABLE = parse_table("metric | value\nrevenue | 12")


def _advance(state, tool: ToolId, rng: random.Random):
    if tool in (ToolId.ROW_LOOKUP, ToolId.COLUMN_LOOKUP):
        return replace(state, table=_SMALL_TABLE)
    if tool is ToolId.CONTEXT_EXTRACTOR:
        return replace(state, context="The relevant sentence only.")
    if tool is ToolId.KNOWLEDGE_RETRIEVAL:
        return replace(state, context=state.context + "\n\nKNOWLEDGE:\nA recalled fact.")
    if tool is ToolId.SPAN_EXTRACTOR:
        return replace(state, answer=AnswerSlot.spans(("alpha", "beta")))
    if tool is ToolId.SOLUTION_GENERATOR:
        return replace(state, answer=AnswerSlot.solution("The total is 42."))
    if tool is ToolId.PROGRAM_GENERATOR_AND_VERIFIER:
        return replace(state, answer=AnswerSlot.program("ans = 21 * 2"))
    if tool is ToolId.PROGRAM_EXECUTOR:
        return replace(state, answer=AnswerSlot.execution(Decimal(42)))
    if tool is ToolId.SCALE_FINDER:
        return replace(state, answer=state.answer.with_scale(ScaleUnit.THOUSAND))
    assert tool is ToolId.ANSWER_GENERATOR
    final = FinalAnswer(AnswerKind.NUMERIC, Decimal(42), scale=ScaleUnit.THOUSAND)
    return replace(state, answer=AnswerSlot.final(final))


def _synthetic_record(i: int, rng: random.Random) -> TrajectoryRecord:
    instance = make_instance(i, "42")
    if rng.random() < 0.1:  # planner-level failure, nothing executed
        return TrajectoryRecord(
            instance_id=instance.instance_id,
            dataset=instance.dataset,
            plan=(),
            steps=(),
            predicted=None,
            failure=FailureReason(FailureKind.BACKEND, None, "scripted miss"),
            label=NEGATIVE,
        )
    plan = random_valid_plan(rng)
    state = initial_state(instance)
    steps = []
    for tool in plan:
        output = _advance(state, tool, rng)
        digest = None if tool.deterministic else "d" * 64
        steps.append(StepRecord(tool=tool, input=state, output=output, digest=digest))
        state = output
    predicted = state.answer.value if state.answer.kind is SlotKind.FINAL else None
    return TrajectoryRecord(
        instance_id=instance.instance_id,
        dataset=instance.dataset,
        plan=plan,
        steps=tuple(steps),
        predicted=predicted,
        label=POSITIVE if rng.random() < 0.6 else NEGATIVE,
    )


def test_partition_and_conservation_audit(tmp_path, capsys):
    with verdict(capsys, "audit: exact label partition and export conservation on 1000 records, <5s"):
        started = perf_counter()

        rng = random.Random(20260815)
        records = [_synthetic_record(i, rng) for i in range(1000)]
        positives = [r for r in records if r.label == POSITIVE]
        negatives = [r for r in records if r.label == NEGATIVE]
        assert len(positives) + len(negatives) == 1000
        assert {r.instance_id for r in positives} | {r.instance_id for r in negatives} == {
            r.instance_id for r in records
        }
        assert not {r.instance_id for r in positives} & {r.instance_id for r in negatives}

        traj = tmp_path / "synthetic.jsonl"
        write_trajectories(records, traj)

        it_counts = extract_phase2(traj, tmp_path / "it")
        kto = extract_phase4(traj, tmp_path / "kto")

        def occurrences(subset) -> Counter:
            expected: Counter = Counter()
            for r in subset:
                if r.plan and r.steps:
                    expected["planner"] += 1
                for s in r.steps:
                    expected[s.tool.key] += 1
            return expected

        assert it_counts == dict(occurrences(positives))
        assert kto.counts == dict(occurrences(records))
        for key, n in it_counts.items():
            assert len(read_export(tmp_path / "it" / f"{key}.jsonl")) == n
        for key, n in kto.counts.items():
            assert len(read_export(tmp_path / "kto" / f"{key}.jsonl")) == n

        report = audit(traj, it_dir=tmp_path / "it", kto_dir=tmp_path / "kto")
        assert report.ok, report.problems
        assert (report.total, report.positive, report.negative) == (1000, len(positives), len(negatives))

        elapsed = perf_counter() - started
        assert elapsed < 5.0, f"audit criterion took {elapsed:.3f}s"


# ---------------------------------------------------------------------------
# 5. scale vocabulary


def test_scale_vocabulary_exhaustive(capsys):
    with verdict(capsys, "scale vocabulary: exactly {thousand, million, billion, percent, ''}"):
        vocabulary = {
            "thousand": ScaleUnit.THOUSAND,
            "million": ScaleUnit.MILLION,
            "billion": ScaleUnit.BILLION,
            "percent": ScaleUnit.PERCENT,
            "": ScaleUnit.NONE,
        }
        assert {u.value for u in ScaleUnit} == set(vocabulary)
        for token, unit in vocabulary.items():
            assert validate_scale(token) is unit
            assert validate_scale_checked(token) == (unit, True)
            assert validate_scale_checked(f"'{token}'") == (unit, True)

        off_vocabulary = [
            "thousands", "millions", "bn", "k", "mm", "percentage", "%", "hundred",
            "trillion", "milion", "None", "none", "thousand ", "per cent",
        ]
        rng = random.Random(5)
        for _ in range(200):
            word = "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 12)))
            if word not in vocabulary:
                off_vocabulary.append(word)
        for token in off_vocabulary:
            if token.strip().casefold() in vocabulary:
                continue  # trimming and case folding are accepted spellings
            assert validate_scale_checked(token) == (ScaleUnit.NONE, False), token


# ---------------------------------------------------------------------------
# 6. metric arithmetic


def _labeled_record(i: int, label) -> TrajectoryRecord:
    return TrajectoryRecord(
        instance_id=f"m-{i:05d}",
        dataset=DatasetKind.FINQA,
        plan=(ToolId.SOLUTION_GENERATOR, ToolId.ANSWER_GENERATOR),
        steps=(),
        predicted=None,
        label=label,
    )


def test_metric_arithmetic(capsys):
    with verdict(capsys, "metric arithmetic: 3435/6251 -> 54.95%, per-dataset names"):
        records = [_labeled_record(i, POSITIVE if i < 3435 else NEGATIVE) for i in range(6251)]
        report = score_run(records, DatasetKind.FINQA)
        assert (report.total, report.correct, report.incorrect) == (6251, 3435, 2816)
        assert report.correct_pct == 54.95
        assert report.incorrect_pct == 45.05
        assert report.metric == "Acc"
        assert METRIC_NAMES[DatasetKind.TATQA] == "EM"
        assert METRIC_NAMES[DatasetKind.TABMWP] == "Acc"


# ---------------------------------------------------------------------------
# 7. full dataset loader counts (needs the real corpora on disk)


EXPECTED_COUNTS = [
    (DatasetKind.FINQA, "train", 6251),
    (DatasetKind.TATQA, "train", 13205),
    (DatasetKind.TABMWP, "train", 23059),
    (DatasetKind.TATQA, "test", 1663),
]


def test_loader_counts_against_full_corpora(capsys):
    import os

    manifest_path = os.environ.get("TABREASON_DATA")
    if not manifest_path or not Path(manifest_path).exists():
        pytest.skip("full corpora not present (set TABREASON_DATA to a data manifest)")
    manifest = load_data_manifest(manifest_path)
    with verdict(capsys, "loader counts: finqa 6251, tatqa 13205/1663, tabmwp 23059"):
        for kind, split, expected in EXPECTED_COUNTS:
            path = resolve_split(manifest, kind, split)
            if not path.exists():
                pytest.skip(f"{kind.value}/{split} missing from manifest")
            instances = load_dataset(kind, path, split)
            assert len(instances) == expected, f"{kind.value}/{split}"


# ---------------------------------------------------------------------------
# 8. replay determinism over a 100-instance cassette


def test_replay_determinism_100_instances(tmp_path, capsys):
    with verdict(capsys, "replay determinism: two runs over 100 instances are byte-identical"):
        cassette = tmp_path / "cassette.jsonl"
        instances = build_toy_run(cassette, n=100)
        (tmp_path / "tabmwp_train.json").write_text(
            json.dumps(toy_dataset_file(instances)), encoding="utf-8"
        )
        (tmp_path / "data.json").write_text(
            json.dumps({"tabmwp": {"train": "tabmwp_train.json"}}), encoding="utf-8"
        )

        outputs = []
        for name in ("first", "second"):
            out_dir = tmp_path / name
            code = run_cli(
                [
                    "generate",
                    "--dataset", "tabmwp",
                    "--out", str(out_dir),
                    "--cassette", str(cassette),
                    "--data", str(tmp_path / "data.json"),
                ]
            )
            assert code == 0
            outputs.append(out_dir)

        first, second = outputs
        records = read_trajectories(first / "trajectories.jsonl")
        assert len(records) == 100
        assert (first / "trajectories.jsonl").read_bytes() == (second / "trajectories.jsonl").read_bytes()
        assert (first / "manifest.json").read_bytes() == (second / "manifest.json").read_bytes()
