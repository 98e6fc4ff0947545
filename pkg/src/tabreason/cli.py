"""Operator command line: generation, extraction, scoring, and debug tools.

Configuration resolves flags first, then environment variables, then the
optional JSON config file. Exit codes: 0 success, 2 validation or audit
failure, 1 configuration or IO error, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any, Mapping

from tabreason.answers import EmptyRun, format_metric_block, score_run
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
    UnroutedTool,
    read_cassette,
)
from tabreason.datasets import IoError, SchemaError, read_manifest, read_trajectories
from tabreason.interpreter import (
    ExecError,
    LexError,
    ProgramSyntaxError,
    execute_program,
    parse_program,
    render_number,
    render_value,
)
from tabreason.model import DatasetKind, Phase
from tabreason.pipeline import (
    ConfigError,
    NoCandidates,
    PhaseSpec,
    audit,
    extract_phase2,
    extract_phase4,
    run_generation,
    select_best,
)
from tabreason.planner import (
    PlanError,
    TemplateError,
    format_trajectory,
    load_templates,
    prepare_plan,
    prompt_values,
    render_prompt,
)
from tabreason.tables import EmptyTableError, parse_table, render_table

USAGE_EXIT = 64
_ENV_PREFIX = "TABREASON_"
_CONFIG_KEYS = {
    "mode", "cassette", "base_url", "auth_env", "templates", "routing", "workers", "data",
}


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit 64 instead of 2."""

    def error(self, message: str) -> "NoReturn":  # noqa: F821 - argparse idiom
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _formatter(prog: str) -> argparse.HelpFormatter:
    # fixed width keeps --help byte-stable across terminals
    return argparse.HelpFormatter(prog, width=96)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True, slots=True)
class CliConfig:
    mode: BackendMode
    base_url: str | None
    auth_env: str
    cassette: Path | None
    data_manifest: Path | None
    template_dir: Path | None
    routing: RoutingTable
    workers: int

    def require_backend(self) -> None:
        if self.mode is BackendMode.REPLAY and self.cassette is None:
            raise ConfigError("replay mode requires a cassette path")
        if self.mode in (BackendMode.LIVE, BackendMode.RECORD) and not self.base_url:
            raise ConfigError(f"{self.mode.value} mode requires a backend base URL")


def _load_config_file(path: Path) -> tuple[dict, Path]:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, Mapping):
        raise ConfigError(f"config {path}: expected a JSON object")
    unknown = sorted(set(obj) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"config {path}: unknown keys: {', '.join(unknown)}")
    return dict(obj), path.parent


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """Merge flags > environment > config file into one CliConfig."""
    file_obj: dict = {}
    file_base = Path(".")
    config_path = getattr(args, "config", None) or os.environ.get(_ENV_PREFIX + "CONFIG")
    if config_path:
        file_obj, file_base = _load_config_file(Path(config_path))

    def pick(name: str, file_key: str, default: Any = None, as_path: bool = False) -> Any:
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        env = os.environ.get(_ENV_PREFIX + file_key.upper())
        if env:
            return Path(env) if as_path else env
        if file_key in file_obj and file_obj[file_key] is not None:
            value = file_obj[file_key]
            return (file_base / str(value)) if as_path else value
        return default

    try:
        mode = BackendMode(str(pick("mode", "mode", "replay")).lower())
    except ValueError as exc:
        raise ConfigError(f"unknown mode: {exc}") from exc
    try:
        workers = int(pick("workers", "workers", 1))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"workers must be an integer: {exc}") from exc
    routing_path = pick("routing", "routing", as_path=True)
    if routing_path is not None:
        try:
            routing = RoutingTable.load(Path(routing_path))
        except (OSError, json.JSONDecodeError, ValueError) as exc:
            raise ConfigError(f"bad routing file {routing_path}: {exc}") from exc
    else:
        routing = RoutingTable.default()
    base_url = pick("base_url", "base_url")
    return CliConfig(
        mode=mode,
        base_url=str(base_url) if base_url else None,
        auth_env=str(pick("auth_env", "auth_env", "TABREASON_API_KEY")),
        cassette=_opt_path(pick("cassette", "cassette", as_path=True)),
        data_manifest=_opt_path(pick("data", "data", as_path=True)),
        template_dir=_opt_path(pick("templates", "templates", as_path=True)),
        routing=routing,
        workers=workers,
    )


def _opt_path(value: Any) -> Path | None:
    return Path(value) if value is not None else None


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cfg.require_backend()
    tokens = args.dataset or ["all"]
    if "all" in tokens:
        datasets = (DatasetKind.FINQA, DatasetKind.TATQA, DatasetKind.TABMWP)
    else:
        datasets = tuple(dict.fromkeys(DatasetKind(t) for t in tokens))
    spec = PhaseSpec(
        phase=Phase(args.phase.upper()),
        datasets=datasets,
        split=args.split,
        routing=cfg.routing,
        out_dir=args.out,
        mode=cfg.mode,
        workers=cfg.workers,
        data_manifest=cfg.data_manifest,
        cassette=cfg.cassette,
        base_url=cfg.base_url,
        api_key_env=cfg.auth_env,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
    )
    templates = load_templates(cfg.template_dir)
    result = run_generation(spec, templates=templates)
    counts = result.manifest.counts
    print(f"trajectories: {result.trajectory_path}")
    print(f"manifest: {result.manifest_path}")
    print(f"run_id: {result.manifest.run_id}")
    print(f"counts: total={counts.total} positive={counts.positive} negative={counts.negative}")
    for kind, n in sorted(counts.failed.items()):
        print(f"failed.{kind}: {n}")
    if result.manifest.metric is not None:
        print(format_metric_block(result.manifest.metric))
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    templates = load_templates(cfg.template_dir)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.kind == "it":
            counts = extract_phase2(args.infile, args.out, templates=templates)
            weights = None
        else:
            result = extract_phase4(args.infile, args.out, templates=templates)
            counts = result.counts
            weights = result.weights
    for entry in caught:
        print(f"warning: {entry.message}", file=sys.stderr)
    for key, n in sorted(counts.items()):
        print(f"{key}: {n}")
    if weights is not None:
        for key, (desirable, undesirable) in sorted(weights.items()):
            print(f"weights.{key}: desirable={desirable} undesirable={undesirable}")
    if args.kind == "it" and not counts:
        return 2
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    records = read_trajectories(args.infile)
    try:
        report = score_run(records, DatasetKind(args.dataset))
    except (EmptyRun, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(format_metric_block(report))
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cfg.require_backend()
    try:
        table_text = Path(args.table).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read table file: {exc}") from exc
    templates = load_templates(cfg.template_dir)
    # normalize so the request digest matches what generation would issue
    normalized = render_table(parse_table(table_text))
    prompt = render_prompt(
        templates["planner"], prompt_values(args.question, args.context, normalized)
    )
    phase = Phase(args.phase.upper())
    request = ChatRequest.for_prompt(cfg.routing.route(PLANNER_KEY, phase), prompt)
    client = None
    try:
        if cfg.mode is BackendMode.REPLAY:
            client = ReplayClient(cfg.cassette)
        elif cfg.mode is BackendMode.LIVE:
            client = LiveClient(cfg.base_url, cfg.auth_env)
        else:
            # single-call record: the writer appends, so no segment merge needed
            if cfg.cassette is None:
                raise ConfigError("record mode requires a cassette path")
            cfg.cassette.parent.mkdir(parents=True, exist_ok=True)
            client = RecordingClient(
                LiveClient(cfg.base_url, cfg.auth_env),
                CassetteWriter(cfg.cassette),
                read_cassette(cfg.cassette),
            )
        call = client.complete(request)
    finally:
        if client is not None and hasattr(client, "close"):
            client.close()
    plan = prepare_plan(call.response)
    print(format_trajectory(plan))
    return 0


def cmd_exec_program(args: argparse.Namespace) -> int:
    try:
        source = Path(args.program).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read program: {exc}") from exc
    value = execute_program(parse_program(source))
    print(render_number(value) if isinstance(value, Decimal) else render_value(value))
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    report = audit(args.infile, it_dir=args.it, kto_dir=args.kto)
    print(f"total: {report.total}")
    print(f"positive: {report.positive}")
    print(f"negative: {report.negative}")
    for problem in report.problems:
        print(f"problem: {problem}")
    print("audit: ok" if report.ok else "audit: failed")
    return 0 if report.ok else 2


def cmd_select(args: argparse.Namespace) -> int:
    manifests = [read_manifest(p) for p in args.manifests]
    best = select_best(manifests)
    print(json.dumps({"run_id": best.run_id, "routing": best.routing}, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, metavar="FILE",
                   help="JSON config file (env TABREASON_CONFIG); flags and env override it")
    p.add_argument("--mode", choices=["live", "record", "replay"],
                   help="backend mode (env TABREASON_MODE, default replay)")
    p.add_argument("--cassette", type=Path, metavar="FILE",
                   help="record/replay store (env TABREASON_CASSETTE)")
    p.add_argument("--base-url", dest="base_url", metavar="URL",
                   help="chat-completions endpoint (env TABREASON_BASE_URL)")
    p.add_argument("--auth-env", dest="auth_env", metavar="NAME",
                   help="env var holding the bearer token (default TABREASON_API_KEY)")
    p.add_argument("--routing", type=Path, metavar="FILE",
                   help="adapter routing table JSON (env TABREASON_ROUTING)")
    p.add_argument("--templates", type=Path, metavar="DIR",
                   help="prompt template directory (env TABREASON_TEMPLATES)")
    p.add_argument("--workers", type=int, metavar="N",
                   help="worker pool size (env TABREASON_WORKERS, default 1)")


def _add_template_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, metavar="FILE",
                   help="JSON config file (env TABREASON_CONFIG)")
    p.add_argument("--templates", type=Path, metavar="DIR",
                   help="prompt template directory (env TABREASON_TEMPLATES)")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="tabreason",
        description="Plan and run tool trajectories over tabular questions, label them "
        "against gold answers, and export per-tool training data.",
        formatter_class=_formatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", formatter_class=_formatter,
                       help="run a generation phase over a dataset split")
    p.add_argument("--phase", choices=["pe", "it"], default="pe",
                   help="adapter regime to route through (default pe)")
    p.add_argument("--dataset", action="append",
                   choices=["finqa", "tatqa", "tabmwp", "all"],
                   help="dataset selection; repeatable (default all)")
    p.add_argument("--split", default="train", help="dataset split (default train)")
    p.add_argument("--out", type=Path, required=True, metavar="DIR",
                   help="output directory for trajectories and manifest")
    p.add_argument("--data", type=Path, metavar="FILE",
                   help="dataset discovery manifest (env TABREASON_DATA)")
    p.add_argument("--temperature", type=float, default=0.0, help="decoding temperature")
    p.add_argument("--max-tokens", dest="max_tokens", type=int, default=1024,
                   help="completion token cap")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("extract", formatter_class=_formatter,
                       help="harvest training exports from a trajectory file")
    p.add_argument("kind", choices=["it", "kto"],
                   help="it: positive-only tuning pairs; kto: labeled preference pairs")
    p.add_argument("--in", dest="infile", type=Path, required=True, metavar="FILE",
                   help="trajectory JSONL file")
    p.add_argument("--out", type=Path, required=True, metavar="DIR",
                   help="export directory (one JSONL per tool)")
    _add_template_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", formatter_class=_formatter,
                       help="score a labeled trajectory file")
    p.add_argument("--in", dest="infile", type=Path, required=True, metavar="FILE",
                   help="trajectory JSONL file")
    p.add_argument("--dataset", required=True, choices=["finqa", "tatqa", "tabmwp"],
                   help="dataset whose headline metric applies")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", formatter_class=_formatter,
                       help="plan a single instance and print the validated tool sequence")
    p.add_argument("--question", required=True, help="the question text")
    p.add_argument("--table", required=True, type=Path, metavar="FILE",
                   help="file with the pipe-delimited table")
    p.add_argument("--context", default="", help="optional context passage")
    p.add_argument("--phase", choices=["pe", "it"], default="pe",
                   help="routing regime (default pe)")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("exec-program", formatter_class=_formatter,
                       help="run one arithmetic program file and print its value")
    p.add_argument("program", type=Path, help="program source file")
    p.set_defaults(func=cmd_exec_program)

    p = sub.add_parser("audit", formatter_class=_formatter,
                       help="re-check partition and conservation invariants")
    p.add_argument("--in", dest="infile", type=Path, required=True, metavar="FILE",
                   help="trajectory JSONL file")
    p.add_argument("--it", type=Path, metavar="DIR", help="instruction-tuning export directory")
    p.add_argument("--kto", type=Path, metavar="DIR", help="preference export directory")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("select", formatter_class=_formatter,
                       help="pick the best run by validation metric")
    p.add_argument("manifests", nargs="+", type=Path, help="run manifest JSON files")
    p.set_defaults(func=cmd_select)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse handles --help (0) and usage errors (64) by raising
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, TemplateError, UnroutedTool, IoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BackendError, Timeout, CassetteMiss) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SchemaError as exc:
        print(f"invalid data: {exc}", file=sys.stderr)
        return 2
    except (PlanError, LexError, ProgramSyntaxError, ExecError, EmptyTableError, NoCandidates) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
