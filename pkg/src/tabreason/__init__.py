"""Tool-augmented multi-step reasoning over tabular questions.

A planner model proposes a tool sequence for each question, the runtime
executes it against a chat-completion backend (live, recording, or replay),
end-to-end answer checks turn whole trajectories into weak labels, and the
labeled runs export per-tool training data.

The stable entry points are re-exported here; everything else is internal.
"""
from tabreason.answers import MetricReport, compare_answers, parse_number, score_run
from tabreason.backend import (
    BackendMode,
    ChatRequest,
    LiveClient,
    RecordingClient,
    ReplayClient,
    RoutingTable,
)
from tabreason.datasets import (
    PlannerExample,
    RunCounts,
    RunManifest,
    ToolExample,
    export_it,
    export_kto,
    load_data_manifest,
    load_dataset,
    read_manifest,
    read_trajectories,
    write_manifest,
    write_trajectories,
)
from tabreason.interpreter import execute_program, parse_program, render_number, render_value
from tabreason.model import (
    NEGATIVE,
    POSITIVE,
    AnswerKind,
    DatasetKind,
    FinalAnswer,
    GoldAnswer,
    Phase,
    ProblemInstance,
    ScaleUnit,
    ToolId,
    TrajectoryRecord,
)
from tabreason.pipeline import (
    PhaseSpec,
    audit,
    class_weights,
    extract_phase2,
    extract_phase4,
    load_phase_spec,
    run_generation,
    select_best,
)
from tabreason.planner import (
    format_trajectory,
    load_templates,
    parse_trajectory,
    prepare_plan,
    validate_trajectory,
)
from tabreason.tables import Table, parse_table, render_table
from tabreason.tools import ToolRuntime, default_bindings

__all__ = [
    "AnswerKind",
    "BackendMode",
    "ChatRequest",
    "DatasetKind",
    "FinalAnswer",
    "GoldAnswer",
    "LiveClient",
    "MetricReport",
    "NEGATIVE",
    "POSITIVE",
    "Phase",
    "PhaseSpec",
    "PlannerExample",
    "ProblemInstance",
    "RecordingClient",
    "ReplayClient",
    "RoutingTable",
    "RunCounts",
    "RunManifest",
    "ScaleUnit",
    "Table",
    "ToolExample",
    "ToolId",
    "ToolRuntime",
    "TrajectoryRecord",
    "audit",
    "class_weights",
    "compare_answers",
    "default_bindings",
    "execute_program",
    "export_it",
    "export_kto",
    "extract_phase2",
    "extract_phase4",
    "format_trajectory",
    "load_data_manifest",
    "load_dataset",
    "load_phase_spec",
    "load_templates",
    "parse_number",
    "parse_program",
    "parse_table",
    "parse_trajectory",
    "prepare_plan",
    "read_manifest",
    "read_trajectories",
    "render_number",
    "render_table",
    "render_value",
    "run_generation",
    "score_run",
    "select_best",
    "validate_trajectory",
    "write_manifest",
    "write_trajectories",
]
