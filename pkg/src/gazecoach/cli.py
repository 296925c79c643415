"""Command-line front end: build-graph | synthesize | analyze | evaluate.

Exit codes: 0 success, 1 internal or backend failure, 2 bad input or config.
"""

from __future__ import annotations

import functools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import click
import yaml

from .agents import ReplyParseError, parse_report, report_json, run_case, run_principal
from .config import (
    BACKEND_KINDS,
    BACKEND_SCRIPTED,
    MATCHER_LLM,
    MATCHERS,
    MODE_LLM,
    MODES,
    ConfigError,
    RunConfig,
    config_from_dict,
)
from .complexity import POLICIES
from .core import (
    GazeSession,
    Transcript,
    ValidationError,
    dump_json,
    parse_session,
    parse_transcript,
)
from .evaluation import (
    LatencyStats,
    build_matrix,
    case_totals,
    render_table,
    score,
    time_stats,
)
from .gateway import (
    Backend,
    GatewayError,
    RemoteBackend,
    RunJournal,
    load_script,
    read_journal,
)
from .graph import CaseMismatchError, build_thought_graph, graph_to_dict
from .reporting import render_all
from .synth import SynthesisError, generate_corpus, load_distractors, write_corpus

Pair = tuple[GazeSession, Transcript]

_INPUT_ERRORS = (
    ValidationError,
    ConfigError,
    SynthesisError,
    CaseMismatchError,
    FileNotFoundError,
    NotADirectoryError,
    json.JSONDecodeError,
)


def pipeline_errors(func: Callable[..., Any]) -> Callable[..., Any]:
    """Map pipeline exceptions onto the documented exit codes."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except (GatewayError, ReplyParseError) as exc:
            click.echo(f"backend error: {exc}", err=True)
            sys.exit(1)
        except _INPUT_ERRORS as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(2)
        except ValueError as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(2)

    return wrapper


@click.group()
def main() -> None:
    """Detect and explain perceptual errors in paired gaze readings."""


def _load_pair(session_path: Path, transcript_path: Path) -> Pair:
    session = parse_session(session_path.read_bytes())
    transcript = parse_transcript(transcript_path.read_bytes())
    return session, transcript


def _find_pair_files(case_dir: Path) -> tuple[Path, Path] | None:
    for session_name, transcript_name in (
        ("student.session.json", "student.transcript.json"),
        ("session.json", "transcript.json"),
    ):
        session = case_dir / session_name
        transcript = case_dir / transcript_name
        if session.is_file() and transcript.is_file():
            return session, transcript
    return None


def _load_case_dir(root: Path) -> dict[str, Pair]:
    """Pairs keyed by case_id from a directory of per-case subdirectories."""
    pairs: dict[str, Pair] = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = _find_pair_files(sub)
        if files is None:
            continue
        pair = _load_pair(*files)
        pairs[pair[0].case_id] = pair
    if not pairs:
        raise ValidationError(str(root), "no case directories with session/transcript files")
    return pairs


def _student_cases(target: Path) -> list[tuple[str, Pair]]:
    """(case_key, pair) list from a single case directory or a corpus root."""
    files = _find_pair_files(target)
    if files is not None:
        return [(target.name, _load_pair(*files))]
    cases = []
    for sub in sorted(p for p in target.iterdir() if p.is_dir()):
        sub_files = _find_pair_files(sub)
        if sub_files is not None:
            cases.append((sub.name, _load_pair(*sub_files)))
    if not cases:
        raise ValidationError(str(target), "no student cases found")
    return cases


@main.command("build-graph")
@click.argument("session_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("transcript_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--tolerance-ms", default=0, show_default=True, help="Widen each finding window by this much on both ends when aligning fixations.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the graph JSON here instead of stdout.")
@pipeline_errors
def cmd_build_graph(
    session_path: Path, transcript_path: Path, tolerance_ms: int, out_path: Path | None
) -> None:
    """Build the finding-partitioned fixation graph for one reading."""
    pair = _load_pair(session_path, transcript_path)
    graph = build_thought_graph(*pair, tolerance_ms=tolerance_ms)
    payload = dump_json(graph_to_dict(graph))
    if out_path is None:
        click.echo(payload.decode("utf-8"), nl=False)
    else:
        out_path.write_bytes(payload)
        click.echo(f"wrote {out_path}")


@main.command("synthesize")
@click.argument("expert_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, required=True, help="PRNG seed; equal seeds give byte-equal corpora.")
@click.option("--per-type", "per_type", type=int, required=True, help="Variants per error type.")
@click.option("--errors-per-case", default=1, show_default=True, help="Distinct findings injected per variant (same error type).")
@click.option("--distractors", "distractors_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="Misreading table (JSON object label -> text); defaults to the bundled table.")
@pipeline_errors
def cmd_synthesize(
    expert_dir: Path,
    out_dir: Path,
    seed: int,
    per_type: int,
    errors_per_case: int,
    distractors_path: Path | None,
) -> None:
    """Generate a balanced labeled corpus of simulated student cases."""
    experts = list(_load_case_dir(expert_dir).values())
    table = load_distractors(distractors_path)
    variants, manifest = generate_corpus(
        experts, seed, per_type, errors_per_case, table
    )
    write_corpus(out_dir, variants, manifest)
    click.echo(
        f"wrote {len(variants)} cases ({per_type} per error type,"
        f" seed {seed}) to {out_dir}"
    )


def _assemble_config(
    config_path: Path | None,
    scalars: dict[str, Any],
    backend_overrides: dict[str, Any],
    threshold_overrides: dict[str, Any],
) -> RunConfig:
    if config_path is None:
        data: dict[str, Any] = {}
    else:
        with open(config_path, "rb") as handle:
            try:
                data = yaml.safe_load(handle) or {}
            except yaml.YAMLError as exc:
                raise ConfigError("config", f"unparseable file: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a mapping")
    data.update({k: v for k, v in scalars.items() if v is not None})
    backend_overrides = {k: v for k, v in backend_overrides.items() if v is not None}
    if backend_overrides:
        data["backend"] = {**(data.get("backend") or {}), **backend_overrides}
    threshold_overrides = {k: v for k, v in threshold_overrides.items() if v is not None}
    if threshold_overrides:
        data["thresholds"] = {**(data.get("thresholds") or {}), **threshold_overrides}
    return config_from_dict(data)


def _build_backend(config: RunConfig) -> Backend | None:
    """A backend handle, but only when the run can actually use one."""
    if config.mode != MODE_LLM and config.matcher != MATCHER_LLM:
        return None
    settings = config.backend
    assert settings is not None  # config.validate() guarantees it
    if settings.kind == BACKEND_SCRIPTED:
        return load_script(settings.script_path or "")
    return RemoteBackend(settings)


@main.command("analyze")
@click.argument("teacher_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("target", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="YAML/JSON run config; flags below override it.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=Path("analysis"), show_default=True)
@click.option("--policy", type=click.Choice(POLICIES), default=None)
@click.option("--agent-cap", type=int, default=None)
@click.option("--mode", type=click.Choice(MODES), default=None)
@click.option("--communication/--no-communication", "communication", default=None)
@click.option("--matcher", type=click.Choice(MATCHERS), default=None)
@click.option("--synonyms", "synonym_table_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--tolerance-ms", type=int, default=None)
@click.option("--temperature", type=float, default=None)
@click.option("--max-parallel-agents", type=int, default=None)
@click.option("--max-parallel-cases", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--backend-kind", type=click.Choice(BACKEND_KINDS), default=None)
@click.option("--script-path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--base-url", default=None)
@click.option("--model-id", default=None)
@click.option("--api-key-env", default=None, help="Name of the environment variable holding the API key.")
@click.option("--radius", type=float, default=None)
@click.option("--dwell-fraction", type=float, default=None)
@click.option("--explain-plan", is_flag=True, help="Print each case's assessment and comparison plan, without running agents.")
@click.option("--print-config", is_flag=True, help="Print the effective config and exit.")
@pipeline_errors
def cmd_analyze(
    teacher_dir: Path,
    target: Path,
    config_path: Path | None,
    out_dir: Path,
    policy: str | None,
    agent_cap: int | None,
    mode: str | None,
    communication: bool | None,
    matcher: str | None,
    synonym_table_path: str | None,
    tolerance_ms: int | None,
    temperature: float | None,
    max_parallel_agents: int | None,
    max_parallel_cases: int | None,
    seed: int | None,
    backend_kind: str | None,
    script_path: str | None,
    base_url: str | None,
    model_id: str | None,
    api_key_env: str | None,
    radius: float | None,
    dwell_fraction: float | None,
    explain_plan: bool,
    print_config: bool,
) -> None:
    """Compare student cases against their teacher readings.

    TARGET is either one case directory or a corpus root of case
    directories. Reports land in --out as <case>.report.json next to the
    run log.
    """
    config = _assemble_config(
        config_path,
        scalars={
            "policy": policy,
            "agent_cap": agent_cap,
            "mode": mode,
            "communication": communication,
            "matcher": matcher,
            "synonym_table_path": synonym_table_path,
            "tolerance_ms": tolerance_ms,
            "temperature": temperature,
            "max_parallel_agents": max_parallel_agents,
            "max_parallel_cases": max_parallel_cases,
            "seed": seed,
        },
        backend_overrides={
            "kind": backend_kind,
            "script_path": script_path,
            "base_url": base_url,
            "model_id": model_id,
            "api_key_env": api_key_env,
        },
        threshold_overrides={"radius": radius, "dwell_fraction": dwell_fraction},
    )
    if print_config:
        click.echo(dump_json(config.to_dict()).decode("utf-8"), nl=False)
        return

    teachers = _load_case_dir(teacher_dir)
    students = _student_cases(target)
    backend = _build_backend(config)

    def teacher_for(case_key: str, pair: Pair) -> Pair:
        case_id = pair[0].case_id
        teacher = teachers.get(case_id)
        if teacher is None:
            raise ValidationError(case_key, f"no teacher reading for case {case_id!r}")
        return teacher

    if explain_plan:
        for case_key, pair in students:
            assessment, plan = run_principal(
                teacher_for(case_key, pair), pair, config, backend
            )
            payload = {
                "case_key": case_key,
                "assessment": assessment.to_dict(),
                "plan": plan.to_dict(),
            }
            click.echo(dump_json(payload).decode("utf-8"), nl=False)
        return

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_bytes(dump_json(config.to_dict()))
    journal = RunJournal(out_dir / "run_log.jsonl")

    with ThreadPoolExecutor(max_workers=config.max_parallel_cases) as pool:
        futures = [
            (
                case_key,
                pool.submit(
                    run_case,
                    teacher_for(case_key, pair),
                    pair,
                    config,
                    backend,
                    journal,
                    case_key,
                ),
            )
            for case_key, pair in students
        ]
        for index, (case_key, future) in enumerate(futures, start=1):
            feedback = future.result()
            (out_dir / f"{case_key}.report.json").write_bytes(report_json(feedback))
            found = ", ".join(e.value for e in feedback.consolidated_error_types)
            click.echo(f"[{index}/{len(futures)}] {case_key}: {found or 'no errors'}")
    click.echo(f"reports in {out_dir}")


@main.command("evaluate")
@click.argument("reports_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("truth_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None, help="Deliverables directory [default: REPORTS_DIR/eval].")
@click.option("--run-log", "run_log_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="Run journal for latency stats [default: REPORTS_DIR/run_log.jsonl if present].")
@pipeline_errors
def cmd_evaluate(
    reports_dir: Path,
    truth_dir: Path,
    out_dir: Path | None,
    run_log_path: Path | None,
) -> None:
    """Score reports against a corpus's injected ground truth.

    Writes metrics as JSON, an aligned text table, CSV files, and rendered
    figures.
    """
    report_files = sorted(reports_dir.glob("*.report.json"))
    if not report_files:
        raise ValidationError(str(reports_dir), "no *.report.json files")

    predicted: list[tuple[str, list[str]]] = []
    c_errors: list[int] = []
    for path in report_files:
        data = json.loads(path.read_text(encoding="utf-8"))
        _, labels = parse_report(data)
        predicted.append((path.name[: -len(".report.json")], labels))
        c_errors.append(int(data.get("assessment", {}).get("c_error", 0)))

    truths: dict[str, list[str]] = {}
    for sub in sorted(p for p in truth_dir.iterdir() if p.is_dir()):
        truth_file = sub / "truth.json"
        if not truth_file.is_file():
            continue
        truth = json.loads(truth_file.read_text(encoding="utf-8"))
        truths[sub.name] = sorted(
            {entry["error_type"] for entry in truth["injected"]}
        )
    if not truths:
        raise ValidationError(str(truth_dir), "no truth.json files in case directories")

    matrix = build_matrix(predicted, truths)

    if run_log_path is None:
        candidate = reports_dir / "run_log.jsonl"
        run_log_path = candidate if candidate.is_file() else None
    totals: dict[str, float] = {}
    latency = LatencyStats()
    if run_log_path is not None:
        records = read_journal(run_log_path)
        totals, _ = case_totals(records)
        latency = time_stats(records)

    metrics = score(matrix, latency)
    out = out_dir or (reports_dir / "eval")
    written = render_all(
        metrics,
        matrix,
        out,
        c_errors=c_errors,
        case_totals_ms=sorted(totals.values()),
    )
    (out / "metrics.json").write_bytes(dump_json(metrics.to_dict()))
    (out / "metrics.txt").write_text(render_table(metrics), encoding="utf-8")
    written += [out / "metrics.json", out / "metrics.txt"]

    click.echo(render_table(metrics), nl=False)
    click.echo(f"wrote {len(written)} files under {out}")


if __name__ == "__main__":
    main()
