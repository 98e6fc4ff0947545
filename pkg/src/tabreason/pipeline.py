"""Batch orchestration over the four training-data phases.

One runner generates and labels trajectories for both generation phases
(they differ only in adapter routing); extraction then harvests per-tool
instruction-tuning pairs from positives and preference pairs from all
records, computing class-imbalance weights; an audit pass re-checks the
partition and conservation invariants on the artifacts.
"""
from __future__ import annotations

import json
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from tabreason.answers import compare_answers, score_run
from tabreason.backend import (
    PLANNER_KEY,
    BackendError,
    BackendMode,
    CassetteMiss,
    CassetteWriter,
    ChatRequest,
    LiveClient,
    RecordingClient,
    ReplayClient,
    RoutingTable,
    Timeout,
    merge_cassette_segments,
    read_cassette,
)
from tabreason.datasets import (
    PLANNER_NAME,
    PlannerExample,
    RunCounts,
    RunManifest,
    ToolExample,
    TrainingPair,
    derive_run_id,
    export_it,
    export_kto,
    load_data_manifest,
    load_dataset,
    read_export,
    read_trajectories,
    resolve_split,
    write_manifest,
    write_trajectories,
)
from tabreason.model import (
    NEGATIVE,
    POSITIVE,
    DatasetKind,
    FailureKind,
    FailureReason,
    Phase,
    ProblemInstance,
    ScaleUnit,
    StepRecord,
    ToolId,
    ToolState,
    TrainingConfig,
    TrajectoryRecord,
)
from tabreason.planner import (
    PlanError,
    PromptTemplate,
    format_trajectory,
    load_templates,
    prepare_plan,
    prompt_values,
    render_prompt,
)
from tabreason.tables import render_table
from tabreason.tools import (
    SECTION_HEADERS,
    BindingKind,
    ToolBinding,
    ToolRuntime,
    default_bindings,
    render_slot,
    render_tool_prompt,
)

_ALL_DATASETS = (DatasetKind.FINQA, DatasetKind.TATQA, DatasetKind.TABMWP)


class ConfigError(ValueError):
    """A phase config is missing required keys or combines them illegally."""


class NoPositives(UserWarning):
    """Instruction-tuning extraction found no positive trajectories."""


class DegenerateClass(UserWarning):
    """A preference export has only one label class; weights fall back to (1, 1)."""


class NoCandidates(LookupError):
    """select_best received no scored manifests."""


# ---------------------------------------------------------------------------
# phase spec


@dataclass(frozen=True, slots=True)
class PhaseSpec:
    """One generation run: which phase, which data, which adapters, which mode."""

    phase: Phase
    datasets: tuple[DatasetKind, ...]
    split: str
    routing: RoutingTable
    out_dir: Path
    mode: BackendMode = BackendMode.REPLAY
    workers: int = 1
    data_manifest: Path | None = None
    cassette: Path | None = None
    base_url: str | None = None
    api_key_env: str = "TABREASON_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.phase not in (Phase.PE, Phase.IT):
            raise ConfigError(f"generation runs in PE or IT, not {self.phase.value}")
        if not self.datasets:
            raise ConfigError("at least one dataset required")
        if len(set(self.datasets)) != len(self.datasets):
            raise ConfigError("duplicate dataset in selection")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.mode is BackendMode.REPLAY and self.cassette is None:
            raise ConfigError("replay mode requires a cassette path")
        if self.mode in (BackendMode.LIVE, BackendMode.RECORD) and not self.base_url:
            raise ConfigError(f"{self.mode.value} mode requires a backend base URL")

    @property
    def dataset_token(self) -> str:
        if set(self.datasets) == set(_ALL_DATASETS):
            return "all"
        return "+".join(d.value for d in self.datasets)


def load_phase_spec(path: str | Path) -> PhaseSpec:
    """Read a phase config file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    allowed = {
        "phase", "datasets", "split", "routing", "workers", "mode", "paths",
        "base_url", "auth_env", "temperature", "max_tokens",
    }
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    base = path.parent

    def _resolve(p: object) -> Path:
        return (base / Path(str(p))).resolve()

    try:
        phase = Phase(str(obj.get("phase", "PE")).upper())
    except ValueError as exc:
        raise ConfigError(f"unknown phase {obj.get('phase')!r}") from exc
    raw_datasets = obj.get("datasets", "all")
    if raw_datasets == "all":
        datasets = _ALL_DATASETS
    else:
        if isinstance(raw_datasets, str):
            raw_datasets = [raw_datasets]
        try:
            datasets = tuple(DatasetKind(str(d)) for d in raw_datasets)
        except ValueError as exc:
            raise ConfigError(f"unknown dataset in {raw_datasets!r}") from exc
    try:
        mode = BackendMode(str(obj.get("mode", "replay")).lower())
    except ValueError as exc:
        raise ConfigError(f"unknown mode {obj.get('mode')!r}") from exc
    raw_routing = obj.get("routing")
    if raw_routing is None:
        routing = RoutingTable.default()
    elif isinstance(raw_routing, str):
        try:
            routing = RoutingTable.load(_resolve(raw_routing))
        except (OSError, json.JSONDecodeError, ValueError) as exc:
            raise ConfigError(f"bad routing file {raw_routing!r}: {exc}") from exc
    else:
        try:
            routing = RoutingTable.from_dict(raw_routing)
        except ValueError as exc:
            raise ConfigError(f"bad routing table: {exc}") from exc
    paths = obj.get("paths", {})
    if not isinstance(paths, Mapping) or "out" not in paths:
        raise ConfigError("paths.out is required")
    return PhaseSpec(
        phase=phase,
        datasets=datasets,
        split=str(obj.get("split", "train")),
        routing=routing,
        out_dir=_resolve(paths["out"]),
        mode=mode,
        workers=int(obj.get("workers", 1)),
        data_manifest=_resolve(paths["data"]) if "data" in paths else None,
        cassette=_resolve(paths["cassette"]) if "cassette" in paths else None,
        base_url=str(obj["base_url"]) if obj.get("base_url") else None,
        api_key_env=str(obj.get("auth_env", "TABREASON_API_KEY")),
        temperature=float(obj.get("temperature", 0.0)),
        max_tokens=int(obj.get("max_tokens", 1024)),
    )


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True, slots=True)
class GenerationResult:
    trajectory_path: Path
    manifest_path: Path
    manifest: RunManifest
    records: tuple[TrajectoryRecord, ...]


def run_generation(
    spec: PhaseSpec,
    instances: Sequence[ProblemInstance] | None = None,
    templates: dict[str, PromptTemplate] | None = None,
) -> GenerationResult:
    """Plan, execute, and label every instance; write trajectories + manifest.

    Per-instance failures become negative records; only configuration
    problems abort the run.
    """
    templates = templates if templates is not None else load_templates()
    bindings = default_bindings(templates)
    if instances is None:
        if spec.data_manifest is None:
            raise ConfigError("no instances given and no data manifest configured")
        catalog = load_data_manifest(spec.data_manifest)
        loaded: list[ProblemInstance] = []
        for kind in spec.datasets:
            loaded.extend(load_dataset(kind, resolve_split(catalog, kind, spec.split), spec.split))
        instances = loaded

    records = _generate(spec, list(instances), templates, bindings)
    records.sort(key=lambda r: r.instance_id)

    spec.out_dir.mkdir(parents=True, exist_ok=True)
    trajectory_path = spec.out_dir / "trajectories.jsonl"
    write_trajectories(records, trajectory_path)

    metric = None
    if len(spec.datasets) == 1 and records:
        # the headline metric is dataset-specific; mixed runs carry counts only
        metric = score_run(records, spec.datasets[0])
    manifest = RunManifest(
        run_id=derive_run_id(trajectory_path.read_bytes()),
        phase=spec.phase,
        dataset=spec.dataset_token,
        split=spec.split,
        template_versions={name: tpl.version for name, tpl in templates.items()},
        routing=spec.routing.as_dict(),
        counts=_count(records),
        metric=metric,
    )
    manifest_path = spec.out_dir / "manifest.json"
    write_manifest(manifest, manifest_path)
    return GenerationResult(trajectory_path, manifest_path, manifest, tuple(records))


def _generate(
    spec: PhaseSpec,
    instances: list[ProblemInstance],
    templates: dict[str, PromptTemplate],
    bindings: dict[ToolId, ToolBinding],
) -> list[TrajectoryRecord]:
    if spec.mode is BackendMode.REPLAY:
        client = ReplayClient(spec.cassette)
        return _fan_out(spec, instances, templates, bindings, lambda _: client)
    if spec.mode is BackendMode.LIVE:
        clients: list[LiveClient] = []

        def live_factory(_: int) -> LiveClient:
            client = LiveClient(spec.base_url, spec.api_key_env)
            clients.append(client)
            return client

        try:
            return _fan_out(spec, instances, templates, bindings, live_factory)
        finally:
            for client in clients:
                client.close()

    # record mode: one segment per worker chunk, merged on close
    primed = read_cassette(spec.cassette) if spec.cassette.exists() else {}
    spec.cassette.parent.mkdir(parents=True, exist_ok=True)
    segments: list[Path] = []
    recorders: list[RecordingClient] = []

    def record_factory(index: int) -> RecordingClient:
        segment = spec.cassette.with_name(f"{spec.cassette.name}.seg{index}")
        segments.append(segment)
        client = RecordingClient(LiveClient(spec.base_url, spec.api_key_env), CassetteWriter(segment), primed)
        recorders.append(client)
        return client

    try:
        return _fan_out(spec, instances, templates, bindings, record_factory)
    finally:
        for client in recorders:
            client.close()
        merge_cassette_segments(spec.cassette, segments)


def _fan_out(spec, instances, templates, bindings, client_factory) -> list[TrajectoryRecord]:
    workers = min(spec.workers, max(len(instances), 1))
    if workers == 1:
        client = client_factory(0)
        return [_run_one(i, spec, templates, bindings, client) for i in instances]
    chunks = [instances[i::workers] for i in range(workers)]
    clients = [client_factory(i) for i in range(len(chunks))]

    def work(pair):
        chunk, client = pair
        return [_run_one(i, spec, templates, bindings, client) for i in chunk]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        nested = pool.map(work, zip(chunks, clients))
    return [record for batch in nested for record in batch]


def _run_one(
    instance: ProblemInstance,
    spec: PhaseSpec,
    templates: dict[str, PromptTemplate],
    bindings: dict[ToolId, ToolBinding],
    client,
) -> TrajectoryRecord:
    prompt = render_prompt(
        templates[PLANNER_NAME],
        prompt_values(instance.question, instance.context, render_table(instance.table)),
    )
    request = ChatRequest.for_prompt(
        spec.routing.route(PLANNER_KEY, spec.phase),
        prompt,
        temperature=spec.temperature,
        max_tokens=spec.max_tokens,
    )
    try:
        call = client.complete(request)
    except (BackendError, Timeout, CassetteMiss) as exc:
        record = _planless(instance, FailureReason(FailureKind.BACKEND, None, str(exc)))
    else:
        try:
            plan = prepare_plan(call.response)
        except PlanError as exc:
            record = _planless(instance, FailureReason(FailureKind.INVALID_PLAN, None, str(exc)))
        else:
            runtime = ToolRuntime(
                bindings,
                client,
                routing=spec.routing,
                phase=spec.phase,
                temperature=spec.temperature,
                max_tokens=spec.max_tokens,
            )
            record = runtime.run_trajectory(instance, plan)
    return replace(record, label=compare_answers(record.predicted, instance.gold))


def _planless(instance: ProblemInstance, failure: FailureReason) -> TrajectoryRecord:
    return TrajectoryRecord(
        instance_id=instance.instance_id,
        dataset=instance.dataset,
        plan=(),
        steps=(),
        predicted=None,
        failure=failure,
        category=instance.category,
    )


def _count(records: Sequence[TrajectoryRecord]) -> RunCounts:
    positive = sum(1 for r in records if r.label == POSITIVE)
    failed = Counter(r.failure.kind.value for r in records if r.failure is not None)
    return RunCounts(
        total=len(records),
        positive=positive,
        negative=len(records) - positive,
        failed=dict(failed),
    )


# ---------------------------------------------------------------------------
# pair harvesting


def _knowledge_payload(step: StepRecord) -> str:
    added = step.output.context[len(step.input.context):]
    added = added.lstrip("\n")
    header = SECTION_HEADERS[ToolId.KNOWLEDGE_RETRIEVAL]
    if added.startswith(header):
        added = added[len(header):].lstrip("\n")
    return added


def step_completion(step: StepRecord) -> str:
    """Reconstruct the training target from the step's owned state change.

    This is the section text the model emitted (minus the stop marker),
    rebuilt from the recorded output so extraction never needs the cassette.
    """
    tool = step.tool
    slot = step.output.answer
    if tool in (ToolId.ROW_LOOKUP, ToolId.COLUMN_LOOKUP):
        payload = render_table(step.output.table)
    elif tool is ToolId.CONTEXT_EXTRACTOR:
        payload = step.output.context
    elif tool is ToolId.KNOWLEDGE_RETRIEVAL:
        payload = _knowledge_payload(step)
    elif tool is ToolId.SPAN_EXTRACTOR:
        payload = str(list(slot.value)) if isinstance(slot.value, tuple) else str(slot.value)
    elif tool is ToolId.SCALE_FINDER:
        unit = slot.scale if slot.scale is not None else ScaleUnit.NONE
        return f"SCALE: '{unit.value}'"
    elif tool in (ToolId.PROGRAM_EXECUTOR, ToolId.ANSWER_GENERATOR):
        payload = render_slot(slot)
    else:  # solution generator, program generator: slot text verbatim
        payload = str(slot.value)
    header = SECTION_HEADERS.get(tool, "ANSWER:")
    return f"{header}\n{payload}"


def _state_prompt(state: ToolState) -> str:
    # deterministic tools have no template; their export prompt is the
    # rendered state block so the pair is still self-contained
    values = prompt_values(
        state.question, state.context, render_table(state.table), render_slot(state.answer)
    )
    return (
        f"QUESTION:\n{values['QUESTION']}\n\n"
        f"{values['CONTEXT_SECTION']}"
        f"TABLE:\n{values['TABLE']}\n\n"
        f"SOLUTION:\n{values['SOLUTION']}"
    )


def pairs_from_record(
    record: TrajectoryRecord,
    templates: dict[str, PromptTemplate],
    bindings: dict[ToolId, ToolBinding],
) -> list[TrainingPair]:
    """One planner pair plus one pair per executed step, tagged with the label."""
    label = record.label
    if label not in (POSITIVE, NEGATIVE):
        raise ValueError(f"record {record.instance_id} is unlabeled")
    pairs: list[TrainingPair] = []
    if record.plan and record.steps:
        first = record.steps[0].input
        planner_tpl = templates[PLANNER_NAME]
        prompt = render_prompt(
            planner_tpl,
            prompt_values(first.question, first.context, render_table(first.table)),
        )
        pairs.append(
            PlannerExample(
                prompt=prompt,
                completion=format_trajectory(record.plan),
                label=label,
                instance_id=record.instance_id,
                template_version=planner_tpl.version,
            )
        )
    for step in record.steps:
        binding = bindings[step.tool]
        if binding.kind is BindingKind.LLM:
            prompt = render_tool_prompt(binding, step.input)
            version = binding.template.version
        else:
            prompt = _state_prompt(step.input)
            version = None
        pairs.append(
            ToolExample(
                tool=step.tool,
                prompt=prompt,
                completion=step_completion(step),
                label=label,
                instance_id=record.instance_id,
                template_version=version,
            )
        )
    return pairs


# ---------------------------------------------------------------------------
# extraction


def extract_phase2(
    trajectory_path: str | Path,
    out_dir: str | Path,
    templates: dict[str, PromptTemplate] | None = None,
) -> dict[str, int]:
    """Harvest instruction-tuning exports from the positive trajectories."""
    templates = templates if templates is not None else load_templates()
    bindings = default_bindings(templates)
    records = read_trajectories(trajectory_path)
    positives = [r for r in records if r.label == POSITIVE]
    if not positives:
        warnings.warn(NoPositives(f"no positive trajectories in {trajectory_path}"))
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        return {}
    pairs = [p for r in positives for p in pairs_from_record(r, templates, bindings)]
    return export_it(pairs, out_dir)


def class_weights(n_pos: int, n_neg: int, name: str = "export") -> tuple[float, float]:
    """(desirable, undesirable) weights balancing the two label masses."""
    if n_pos == 0 or n_neg == 0:
        warnings.warn(DegenerateClass(f"{name}: n+={n_pos}, n-={n_neg}; weights (1, 1)"))
        return (1.0, 1.0)
    if n_pos >= n_neg:
        return (1.0, n_pos / n_neg)
    return (n_neg / n_pos, 1.0)


@dataclass(frozen=True, slots=True)
class Phase4Result:
    counts: dict[str, int]
    weights: dict[str, tuple[float, float]]
    config_dir: Path


def extract_phase4(
    trajectory_path: str | Path,
    out_dir: str | Path,
    templates: dict[str, PromptTemplate] | None = None,
) -> Phase4Result:
    """Emit preference exports over all records plus per-tool weight configs."""
    templates = templates if templates is not None else load_templates()
    bindings = default_bindings(templates)
    records = read_trajectories(trajectory_path)
    pairs = [p for r in records for p in pairs_from_record(r, templates, bindings)]
    counts = export_kto(pairs, out_dir)

    config_dir = Path(out_dir) / "configs"
    config_dir.mkdir(parents=True, exist_ok=True)
    weights: dict[str, tuple[float, float]] = {}
    by_key: dict[str, list[TrainingPair]] = {}
    for pair in pairs:
        by_key.setdefault(pair.file_key, []).append(pair)
    for key in sorted(by_key):
        group = by_key[key]
        n_pos = sum(1 for p in group if p.label == POSITIVE)
        w = class_weights(n_pos, len(group) - n_pos, key)
        weights[key] = w
        config = TrainingConfig(desirable_weight=w[0], undesirable_weight=w[1])
        stub = {"tool": key, **asdict(config)}
        (config_dir / f"{key}.json").write_text(
            json.dumps(stub, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    return Phase4Result(counts=counts, weights=weights, config_dir=config_dir)


# ---------------------------------------------------------------------------
# selection and audit


def select_best(manifests: Sequence[RunManifest]) -> RunManifest:
    """Highest validation metric wins; ties break toward the smallest run id."""
    scored = [m for m in manifests if m.metric is not None]
    if not scored:
        raise NoCandidates("no manifests carry a metric report")
    return min(scored, key=lambda m: (-m.metric.correct_pct, m.run_id))


@dataclass(frozen=True, slots=True)
class AuditReport:
    total: int
    positive: int
    negative: int
    problems: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.problems


def _export_counts(directory: Path) -> dict[str, list[dict]]:
    out: dict[str, list[dict]] = {}
    for path in sorted(directory.glob("*.jsonl")):
        out[path.stem] = read_export(path)
    return out


def _occurrences(records: Iterable[TrajectoryRecord]) -> Counter[str]:
    counts: Counter[str] = Counter()
    for record in records:
        if record.plan and record.steps:
            counts[PLANNER_NAME] += 1
        counts.update(step.tool.key for step in record.steps)
    return counts


def audit(
    trajectory_path: str | Path,
    it_dir: str | Path | None = None,
    kto_dir: str | Path | None = None,
) -> AuditReport:
    """Re-check partition and conservation invariants on run artifacts."""
    records = read_trajectories(trajectory_path)
    problems: list[str] = []

    ids = [r.instance_id for r in records]
    for dup, n in Counter(ids).items():
        if n > 1:
            problems.append(f"instance {dup} appears {n} times")
    positives = [r for r in records if r.label == POSITIVE]
    negatives = [r for r in records if r.label == NEGATIVE]
    if len(positives) + len(negatives) != len(records):
        problems.append("labels outside {+1, -1}")
    for r in records:
        if r.failure is not None and r.label != NEGATIVE:
            problems.append(f"instance {r.instance_id} failed but is labeled positive")
    label_by_id = {r.instance_id: r.label for r in records}
    positive_ids = {r.instance_id for r in positives}

    if it_dir is not None:
        expected = _occurrences(positives)
        found = _export_counts(Path(it_dir))
        for key in sorted(set(expected) | set(found)):
            want = expected.get(key, 0)
            got = len(found.get(key, []))
            if want != got:
                problems.append(f"it/{key}: {got} lines, expected {want}")
        for key, lines in found.items():
            for line in lines:
                if line.get("id") not in positive_ids:
                    problems.append(f"it/{key}: line for non-positive instance {line.get('id')}")
                if "label" in line:
                    problems.append(f"it/{key}: unexpected label field")

    if kto_dir is not None:
        expected = _occurrences(records)
        found = _export_counts(Path(kto_dir))
        for key in sorted(set(expected) | set(found)):
            want = expected.get(key, 0)
            got = len(found.get(key, []))
            if want != got:
                problems.append(f"kto/{key}: {got} lines, expected {want}")
        for key, lines in found.items():
            for line in lines:
                want = label_by_id.get(line.get("id"))
                if line.get("label") != want:
                    problems.append(
                        f"kto/{key}: label {line.get('label')} disagrees with record {line.get('id')}"
                    )

    return AuditReport(
        total=len(records),
        positive=len(positives),
        negative=len(negatives),
        problems=tuple(problems),
    )
