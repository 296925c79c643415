"""Analysis agents: the principal coordinator, per-comparison error teachers,
and the consolidator that turns their verdicts into one feedback report.

Two execution modes share every data path. Reference mode classifies each
comparison with a deterministic gaze-evidence ladder and touches no backend;
llm mode asks a chat backend for each verdict but still computes all evidence
counters locally.
"""

from __future__ import annotations

import json
import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Sequence

from .complexity import (
    EMPTY_POOL,
    RESIDUAL_POOL,
    ComparisonPlan,
    ComparisonTask,
    ComplexityAssessment,
    assess,
    plan_comparisons,
)
from .config import (
    MATCHER_LLM,
    MODE_LLM,
    MODE_REFERENCE,
    RunConfig,
    Thresholds,
)
from .core import GazeSession, Transcript, ValidationError, dump_json, validate_pair
from .gateway import Backend, ChatMessage, ChatRequest, RunJournal, with_retry
from .graph import (
    ExactMatcher,
    FindingMatcher,
    GraphNode,
    SubgraphSummary,
    ThoughtGraph,
    build_thought_graph,
    summarize_subgraph,
)
from .prompts import matcher_prompts, pet_prompts, repair_prompt

SCHEMA_VERSION = "1"


class ErrorType(str, Enum):
    MISSED_FIXATION = "missed_fixation"
    BRIEF_FIXATION = "brief_fixation"
    KNOWLEDGE_GAP = "knowledge_gap"
    NONE = "none"


# Canonical serialization order for consolidated sets; mirrors the eval
# label vocabulary.
ERROR_LABELS = (
    ErrorType.MISSED_FIXATION,
    ErrorType.BRIEF_FIXATION,
    ErrorType.KNOWLEDGE_GAP,
)


class ReplyParseError(ValueError):
    """A backend reply did not contain the required JSON payload."""


@dataclass(frozen=True)
class Evidence:
    """Locally computed gaze-overlap counters for one comparison."""

    overlap_fixations: int
    student_dwell_ms: int
    teacher_dwell_ms: int
    dwell_ratio: float | None

    def __post_init__(self) -> None:
        if min(self.overlap_fixations, self.student_dwell_ms, self.teacher_dwell_ms) < 0:
            raise ValueError("evidence counters must be nonnegative")
        if (self.dwell_ratio is None) != (self.teacher_dwell_ms == 0):
            raise ValueError("dwell_ratio must be present iff teacher dwell > 0")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "overlap_fixations": self.overlap_fixations,
            "student_dwell_ms": self.student_dwell_ms,
            "teacher_dwell_ms": self.teacher_dwell_ms,
        }
        if self.dwell_ratio is not None:
            out["dwell_ratio"] = self.dwell_ratio
        return out


@dataclass(frozen=True)
class PetVerdict:
    task_id: str
    missed_finding_label: str
    error_type: ErrorType
    rationale: str
    evidence: Evidence


@dataclass(frozen=True)
class FindingFeedback:
    error_type: ErrorType
    rationale: str
    evidence: Evidence


@dataclass(frozen=True)
class FeedbackReport:
    case_id: str
    assessment: ComplexityAssessment
    per_finding: dict[str, FindingFeedback]
    consolidated_error_types: tuple[ErrorType, ...]
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "case_id": self.case_id,
            "assessment": self.assessment.to_dict(),
            "per_finding": {
                label: {
                    "error_type": fb.error_type.value,
                    "rationale": fb.rationale,
                    "evidence": fb.evidence.to_dict(),
                }
                for label, fb in self.per_finding.items()
            },
            "consolidated_error_types": [e.value for e in self.consolidated_error_types],
        }


def report_json(report: FeedbackReport) -> bytes:
    return dump_json(report.to_dict())


def parse_report(data: dict[str, Any]) -> tuple[str, list[str]]:
    """(case_id, consolidated error labels) from a serialized report."""
    case_id = data["case_id"]
    labels = list(data["consolidated_error_types"])
    for label in labels:
        ErrorType(label)
    return case_id, labels


def compute_evidence(
    teacher_summary: SubgraphSummary,
    student_nodes: Sequence[GraphNode],
    thresholds: Thresholds,
) -> Evidence:
    """Overlap counters: student fixations within `radius` of the teacher's
    gaze centroid (Euclidean over normalized coordinates, boundary inclusive).
    """
    teacher_dwell = teacher_summary.total_dwell_ms
    if teacher_summary.centroid is None:
        return Evidence(0, 0, teacher_dwell, None if teacher_dwell == 0 else 0.0)
    cx, cy = teacher_summary.centroid
    overlapping = [
        n for n in student_nodes if math.dist((n.x, n.y), (cx, cy)) <= thresholds.radius
    ]
    dwell = sum(n.duration_ms for n in overlapping)
    ratio = dwell / teacher_dwell if teacher_dwell > 0 else None
    return Evidence(len(overlapping), dwell, teacher_dwell, ratio)


def classify_evidence(evidence: Evidence, thresholds: Thresholds) -> ErrorType:
    """The deterministic decision ladder over overlap evidence.

    Zero teacher dwell means the finding was dictated without comparable gaze;
    that degenerates to knowledge_gap (callers flag it in the rationale).
    """
    if evidence.teacher_dwell_ms == 0:
        return ErrorType.KNOWLEDGE_GAP
    if evidence.overlap_fixations == 0:
        return ErrorType.MISSED_FIXATION
    # Strict less-than: dwell exactly at the fraction is not "brief".
    if evidence.student_dwell_ms < thresholds.dwell_fraction * evidence.teacher_dwell_ms:
        return ErrorType.BRIEF_FIXATION
    return ErrorType.KNOWLEDGE_GAP


def reference_classify(
    teacher_summary: SubgraphSummary,
    student_view: Sequence[GraphNode],
    thresholds: Thresholds = Thresholds(),
) -> ErrorType:
    """Classify one comparison without any model in the loop."""
    if teacher_summary.fixation_count == 0:
        raise ValueError(
            f"teacher subgraph for {teacher_summary.finding_label!r} has no"
            " fixations; nothing to compare against"
        )
    return classify_evidence(
        compute_evidence(teacher_summary, student_view, thresholds), thresholds
    )


def _rationale(evidence: Evidence, thresholds: Thresholds) -> str:
    if evidence.teacher_dwell_ms == 0:
        return (
            "teacher dictated this finding without recorded gaze; defaulting"
            " to knowledge_gap (no gaze evidence to compare)"
        )
    if evidence.overlap_fixations == 0:
        return (
            f"no student fixations within {thresholds.radius:g} of the"
            " teacher's gaze centroid for this finding"
        )
    if evidence.student_dwell_ms < thresholds.dwell_fraction * evidence.teacher_dwell_ms:
        return (
            f"student dwell near the finding ({evidence.student_dwell_ms} ms)"
            f" is under {thresholds.dwell_fraction:g} of teacher dwell"
            f" ({evidence.teacher_dwell_ms} ms)"
        )
    return (
        f"student dwell near the finding ({evidence.student_dwell_ms} ms)"
        f" reached {thresholds.dwell_fraction:g} of teacher dwell"
        f" ({evidence.teacher_dwell_ms} ms) or more, yet the finding went"
        " unreported"
    )


def pool_nodes(student: ThoughtGraph, pool: str) -> tuple[GraphNode, ...]:
    if pool == EMPTY_POOL:
        return ()
    if pool == RESIDUAL_POOL:
        return student.residual_nodes()
    return student.member_nodes(pool)


def extract_json_object(text: str) -> dict[str, Any]:
    """Pull the JSON object out of a model reply that may wrap it in prose."""
    candidates = [text.strip()]
    start, end = text.find("{"), text.rfind("}")
    if start != -1 and end > start:
        candidates.append(text[start : end + 1])
    for line in reversed(text.splitlines()):
        line = line.strip()
        if line.startswith("{"):
            candidates.append(line)
    for candidate in candidates:
        try:
            parsed = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, dict):
            return parsed
    raise ReplyParseError("no JSON object found in reply")


def parse_verdict_reply(text: str) -> tuple[ErrorType, str]:
    payload = extract_json_object(text)
    raw = payload.get("error_type")
    if not isinstance(raw, str):
        raise ReplyParseError("reply lacks a string 'error_type' field")
    try:
        error_type = ErrorType(raw.strip().lower())
    except ValueError:
        raise ReplyParseError(f"unknown error_type {raw!r}") from None
    rationale = payload.get("rationale", "")
    if not isinstance(rationale, str):
        raise ReplyParseError("'rationale' must be a string")
    return error_type, rationale


def _ask_with_repair(
    backend: Backend,
    system: str,
    user: str,
    config: RunConfig,
    request_tag: str,
    journal: RunJournal | None,
    parse: Any,
) -> Any:
    """One call plus one repair retry on a malformed reply.

    Returns (parsed, None) on success or (None, last error message) after the
    repair attempt also fails to parse.
    """
    settings = config.backend
    model_id = (settings.model_id if settings else None) or "scripted"
    max_tokens = settings.max_tokens if settings else 1024
    messages = [ChatMessage("system", system), ChatMessage("user", user)]
    last_error = ""
    for _ in range(2):
        request = ChatRequest(
            model_id=model_id,
            messages=tuple(messages),
            temperature=config.temperature,
            max_tokens=max_tokens,
            request_tag=request_tag,
        )
        completion = with_retry(backend, request, journal=journal)
        try:
            return parse(completion.text), None
        except ReplyParseError as exc:
            last_error = str(exc)
            messages = messages + [
                ChatMessage("assistant", completion.text),
                ChatMessage("user", repair_prompt(last_error)),
            ]
    return None, last_error


def run_pet(
    task: ComparisonTask,
    teacher: ThoughtGraph,
    student: ThoughtGraph,
    config: RunConfig,
    backend: Backend | None = None,
    journal: RunJournal | None = None,
    bulletin: Sequence[str] = (),
    case_key: str | None = None,
) -> PetVerdict:
    """Execute one comparison task and return its verdict.

    Evidence counters are always computed locally from the graphs; in llm
    mode only the error_type and rationale come from the model. A reply that
    stays malformed after one repair retry degrades to `none` with a
    diagnostic rationale instead of failing the case. Journal call tags use
    `case_key` when given (so corpus runs attribute latency per variant);
    prompts always carry the real case id.
    """
    label = task.missed_finding_label
    teacher_summary = summarize_subgraph(teacher, label)
    student_nodes = pool_nodes(student, task.student_subgraph_label)
    thresholds = config.thresholds
    evidence = compute_evidence(teacher_summary, student_nodes, thresholds)

    if config.mode == MODE_REFERENCE:
        error_type = classify_evidence(evidence, thresholds)
        rationale = _rationale(evidence, thresholds)
        return PetVerdict(task.task_id, label, error_type, rationale, evidence)

    if backend is None:
        raise ValueError("llm mode requires a backend")
    system, user = pet_prompts(
        task_id=task.task_id,
        case_id=teacher.case_id,
        finding=label,
        pool=task.student_subgraph_label,
        teacher_summary=teacher_summary,
        student_nodes=student_nodes,
        bulletin=bulletin,
    )
    parsed, parse_error = _ask_with_repair(
        backend,
        system,
        user,
        config,
        request_tag=f"{case_key or teacher.case_id}/{task.task_id}",
        journal=journal,
        parse=parse_verdict_reply,
    )
    if parsed is None:
        return PetVerdict(
            task.task_id,
            label,
            ErrorType.NONE,
            f"verdict reply unparseable after repair retry: {parse_error}",
            evidence,
        )
    error_type, rationale = parsed
    return PetVerdict(task.task_id, label, error_type, rationale, evidence)


def parse_matcher_reply(text: str) -> list[tuple[str, str | None]]:
    payload = extract_json_object(text)
    matches = payload.get("matches")
    if not isinstance(matches, list):
        raise ReplyParseError("reply lacks a 'matches' array")
    out: list[tuple[str, str | None]] = []
    for i, entry in enumerate(matches):
        if not isinstance(entry, dict) or "teacher" not in entry:
            raise ReplyParseError(f"matches[{i}] must be an object with 'teacher'")
        teacher = entry["teacher"]
        student = entry.get("student")
        if not isinstance(teacher, str):
            raise ReplyParseError(f"matches[{i}].teacher must be a string")
        if student is not None and not isinstance(student, str):
            raise ReplyParseError(f"matches[{i}].student must be a string or null")
        out.append((teacher, student))
    return out


class LlmMatcher:
    """Delegates finding matching to one backend call per case.

    Replies that name labels outside the actual student vocabulary count as
    no-match; a teacher label the reply omits also counts as no-match.
    """

    def __init__(
        self,
        case_id: str,
        config: RunConfig,
        backend: Backend,
        journal: RunJournal | None = None,
        request_key: str | None = None,
    ) -> None:
        self.case_id = case_id
        self.config = config
        self.backend = backend
        self.journal = journal
        # journal tag prefix; defaults to the case id
        self.request_key = request_key or case_id

    def match(
        self, teacher_labels: Sequence[str], student_labels: Sequence[str]
    ) -> dict[str, str | None]:
        system, user = matcher_prompts(self.case_id, teacher_labels, student_labels)
        parsed, parse_error = _ask_with_repair(
            self.backend,
            system,
            user,
            self.config,
            request_tag=f"{self.request_key}/matcher",
            journal=self.journal,
            parse=parse_matcher_reply,
        )
        if parsed is None:
            raise ReplyParseError(
                f"matcher reply unparseable after repair retry: {parse_error}"
            )
        exact = ExactMatcher()
        by_canonical = {exact.canonical(s): s for s in reversed(student_labels)}
        unused = set(student_labels)
        mapping: dict[str, str | None] = {label: None for label in teacher_labels}
        for teacher, student in parsed:
            key = next(
                (t for t in teacher_labels if exact.canonical(t) == exact.canonical(teacher)),
                None,
            )
            if key is None or mapping[key] is not None or student is None:
                continue
            resolved = by_canonical.get(exact.canonical(student))
            if resolved is not None and resolved in unused:
                mapping[key] = resolved
                unused.discard(resolved)
        return mapping


def _load_synonyms(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    with open(path, encoding="utf-8") as handle:
        table = json.load(handle)
    if not isinstance(table, dict):
        raise ValidationError("synonyms", "synonym table must be a JSON object")
    return {str(k): str(v) for k, v in table.items()}


def _build_matcher(
    case_id: str,
    config: RunConfig,
    backend: Backend | None,
    journal: RunJournal | None,
    request_key: str | None = None,
) -> FindingMatcher:
    if config.matcher == MATCHER_LLM:
        if backend is None:
            raise ValueError("llm_matcher requires a backend")
        return LlmMatcher(case_id, config, backend, journal, request_key=request_key)
    return ExactMatcher(_load_synonyms(config.synonym_table_path))


def run_principal(
    teacher_pair: tuple[GazeSession, Transcript],
    student_pair: tuple[GazeSession, Transcript],
    config: RunConfig,
    backend: Backend | None = None,
    journal: RunJournal | None = None,
) -> tuple[ComplexityAssessment, ComparisonPlan]:
    """Build both thought graphs, assess complexity, and lay out the plan."""
    teacher_graph = build_thought_graph(*teacher_pair, tolerance_ms=config.tolerance_ms)
    student_graph = build_thought_graph(*student_pair, tolerance_ms=config.tolerance_ms)
    matcher = _build_matcher(teacher_graph.case_id, config, backend, journal)
    assessment = assess(
        teacher_graph,
        student_graph,
        matcher,
        policy=config.policy,
        agent_cap=config.agent_cap,
    )
    plan = plan_comparisons(assessment, teacher_graph, student_graph)
    return assessment, plan


def _merge_evidence(verdicts: Sequence[PetVerdict]) -> Evidence:
    """Pool one finding's evidence across its comparison tasks.

    Overlap counts and student dwell add up across disjoint pools; teacher
    dwell describes the same subgraph in every verdict, so the max is kept.
    """
    overlap = sum(v.evidence.overlap_fixations for v in verdicts)
    dwell = sum(v.evidence.student_dwell_ms for v in verdicts)
    teacher = max(v.evidence.teacher_dwell_ms for v in verdicts)
    ratio = dwell / teacher if teacher > 0 else None
    return Evidence(overlap, dwell, teacher, ratio)


def consolidate(
    verdicts: Iterable[PetVerdict],
    assessment: ComplexityAssessment,
    thresholds: Thresholds = Thresholds(),
    mode: str = MODE_REFERENCE,
) -> FeedbackReport:
    """Reduce all verdicts to one report; output is independent of verdict
    arrival order.

    Per finding, evidence merges first (sums over pools, max teacher dwell)
    and the decision ladder runs on the merged record, so a finding whose
    overlap lives in any pool can never consolidate to missed_fixation. In
    llm mode the finding's verdicts vote by majority instead, with the
    merged-evidence ladder breaking ties; the case-level set is the union of
    per-finding error types, `none` excluded.
    """
    grouped: dict[str, list[PetVerdict]] = {label: [] for label in assessment.missed}
    for verdict in verdicts:
        if verdict.missed_finding_label not in grouped:
            raise ValueError(
                f"verdict for {verdict.missed_finding_label!r}, which is not"
                " a missed finding of this case"
            )
        grouped[verdict.missed_finding_label].append(verdict)

    per_finding: dict[str, FindingFeedback] = {}
    for label in assessment.missed:
        group = sorted(grouped[label], key=lambda v: v.task_id)
        if not group:
            raise ValueError(f"missed finding {label!r} has no verdict")
        merged = _merge_evidence(group)
        ladder_type = classify_evidence(merged, thresholds)
        if mode == MODE_LLM:
            votes = Counter(v.error_type for v in group)
            top = votes.most_common()
            if len(top) > 1 and top[0][1] == top[1][1]:
                error_type = ladder_type
                rationale = (
                    f"split vote {dict((k.value, c) for k, c in sorted(top))};"
                    f" merged gaze evidence decides: {_rationale(merged, thresholds)}"
                )
            else:
                error_type = top[0][0]
                rationale = next(
                    v.rationale for v in group if v.error_type == error_type
                )
        else:
            error_type = ladder_type
            rationale = _rationale(merged, thresholds)
        per_finding[label] = FindingFeedback(error_type, rationale, merged)

    present = {fb.error_type for fb in per_finding.values()}
    consolidated = tuple(e for e in ERROR_LABELS if e in present)
    return FeedbackReport(
        case_id=assessment.case_id,
        assessment=assessment,
        per_finding=per_finding,
        consolidated_error_types=consolidated,
    )


def _gate_report(
    assessment: ComplexityAssessment,
    teacher: ThoughtGraph,
    student: ThoughtGraph,
    thresholds: Thresholds,
) -> FeedbackReport:
    """Report for a case whose complexity score recruited no agents.

    Missed findings (possible when counts coincide but labels differ) stay
    listed with locally computed evidence against the student's whole session,
    marked `none` rather than analyzed.
    """
    all_nodes = student.nodes
    per_finding: dict[str, FindingFeedback] = {}
    for label in assessment.missed:
        evidence = compute_evidence(
            summarize_subgraph(teacher, label), all_nodes, thresholds
        )
        per_finding[label] = FindingFeedback(
            ErrorType.NONE,
            "complexity score is zero: no agents recruited, finding listed"
            " without analysis",
            evidence,
        )
    return FeedbackReport(
        case_id=assessment.case_id,
        assessment=assessment,
        per_finding=per_finding,
        consolidated_error_types=(),
    )


def run_case(
    teacher_pair: tuple[GazeSession, Transcript],
    student_pair: tuple[GazeSession, Transcript],
    config: RunConfig,
    backend: Backend | None = None,
    journal: RunJournal | None = None,
    case_key: str | None = None,
) -> FeedbackReport:
    """Full pipeline for one case: principal, PET fan-out, consolidation.

    PET tasks run concurrently up to max_parallel_agents (default: one worker
    per agent slot); communication mode instead serializes tasks in task_id
    order and appends each earlier verdict to the next prompt's bulletin.
    Verdicts are consolidated in plan order whatever the completion order.
    """
    started = time.monotonic()
    report = validate_pair(teacher_pair, student_pair)
    if not report.ok:
        raise ValidationError("pair", "; ".join(report.problems))

    teacher_graph = build_thought_graph(*teacher_pair, tolerance_ms=config.tolerance_ms)
    student_graph = build_thought_graph(*student_pair, tolerance_ms=config.tolerance_ms)
    matcher = _build_matcher(
        teacher_graph.case_id, config, backend, journal, request_key=case_key
    )
    assessment = assess(
        teacher_graph,
        student_graph,
        matcher,
        policy=config.policy,
        agent_cap=config.agent_cap,
    )
    plan = plan_comparisons(assessment, teacher_graph, student_graph)

    blocked_ms = 0.0
    if plan.n_agents == 0:
        feedback = _gate_report(
            assessment, teacher_graph, student_graph, config.thresholds
        )
    else:
        tasks = sorted(plan.tasks, key=lambda t: t.task_id)
        verdicts: list[PetVerdict]
        if config.communication:
            bulletin: list[str] = []
            verdicts = []
            call_start = time.monotonic()
            for task in tasks:
                verdict = run_pet(
                    task,
                    teacher_graph,
                    student_graph,
                    config,
                    backend,
                    journal,
                    bulletin=tuple(bulletin),
                    case_key=case_key,
                )
                verdicts.append(verdict)
                bulletin.append(
                    f"{task.task_id} finding {verdict.missed_finding_label!r}"
                    f" vs pool {task.student_subgraph_label!r}:"
                    f" {verdict.error_type.value}"
                )
            blocked_ms = (time.monotonic() - call_start) * 1000
        else:
            workers = config.max_parallel_agents or plan.n_agents
            workers = max(1, min(workers, len(tasks)))
            call_start = time.monotonic()
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(
                        run_pet,
                        task,
                        teacher_graph,
                        student_graph,
                        config,
                        backend,
                        journal,
                        case_key=case_key,
                    )
                    for task in tasks
                ]
                verdicts = [f.result() for f in futures]
            blocked_ms = (time.monotonic() - call_start) * 1000
        feedback = consolidate(
            verdicts, assessment, thresholds=config.thresholds, mode=config.mode
        )

    if journal is not None:
        local_ms = max(0.0, (time.monotonic() - started) * 1000 - blocked_ms)
        journal.log_case(
            case_key or feedback.case_id,
            local_ms=local_ms,
            n_tasks=len(plan.tasks),
            n_agents=plan.n_agents,
        )
    return feedback
