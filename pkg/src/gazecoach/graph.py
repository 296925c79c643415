"""Thought-graph construction: align fixations to dictated findings.

A thought graph is a directed graph over one reader's fixations, partitioned
into per-finding subgraphs (one per labeled sentence, in dictation order) plus
a residual pool of fixations that align with no finding. Within a subgraph,
edges form the scanpath: consecutive member fixations in onset order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Protocol, Sequence

from .core import GazeSession, Transcript, normalize_label


class CaseMismatchError(ValueError):
    """Session and transcript do not describe the same reading."""


@dataclass(frozen=True)
class GraphNode:
    """A fixation reference carried by a thought graph."""

    index: int
    x: float
    y: float
    onset_ms: int
    duration_ms: int


@dataclass(frozen=True)
class ThoughtGraph:
    case_id: str
    reader_role: str
    nodes: tuple[GraphNode, ...]
    edges: tuple[tuple[int, int], ...]
    subgraphs: dict[str, tuple[int, ...]]
    residual: tuple[int, ...]

    @property
    def n(self) -> int:
        """Subgraph count; one subgraph per dictated finding."""
        return len(self.subgraphs)

    def finding_labels(self) -> tuple[str, ...]:
        return tuple(self.subgraphs)

    def member_nodes(self, label: str) -> tuple[GraphNode, ...]:
        return tuple(self.nodes[i] for i in self.subgraphs[label])

    def residual_nodes(self) -> tuple[GraphNode, ...]:
        return tuple(self.nodes[i] for i in self.residual)


@dataclass(frozen=True)
class SubgraphSummary:
    """Deterministic gaze evidence for one finding's subgraph.

    ``centroid`` is the duration-weighted mean position; it and the bounding
    box are absent when the subgraph has no member fixations.
    """

    finding_label: str
    fixation_count: int
    total_dwell_ms: int
    centroid: tuple[float, float] | None
    bounding_box: tuple[float, float, float, float] | None


class FindingMatcher(Protocol):
    """Maps each teacher finding label to a matching student label, or None."""

    def match(
        self, teacher_labels: Sequence[str], student_labels: Sequence[str]
    ) -> dict[str, str | None]: ...


class ExactMatcher:
    """Label equality after optional synonym canonicalization.

    The synonym table maps variant labels to their canonical form; both sides
    are canonicalized before comparison. Each student label matches at most
    one teacher label (first teacher in dictation order wins).
    """

    def __init__(self, synonyms: Mapping[str, str] | None = None) -> None:
        self._synonyms = {
            normalize_label(k): normalize_label(v) for k, v in (synonyms or {}).items()
        }

    def canonical(self, label: str) -> str:
        label = normalize_label(label)
        return self._synonyms.get(label, label)

    def match(
        self, teacher_labels: Sequence[str], student_labels: Sequence[str]
    ) -> dict[str, str | None]:
        unused = list(student_labels)
        mapping: dict[str, str | None] = {}
        for teacher_label in teacher_labels:
            want = self.canonical(teacher_label)
            found = next((s for s in unused if self.canonical(s) == want), None)
            if found is not None:
                unused.remove(found)
            mapping[teacher_label] = found
        return mapping


def _check_same_reading(session: GazeSession, transcript: Transcript) -> None:
    if session.case_id != transcript.case_id:
        raise CaseMismatchError(
            f"session case_id {session.case_id!r} != transcript case_id"
            f" {transcript.case_id!r}"
        )
    if session.reader_role != transcript.reader_role:
        raise CaseMismatchError(
            f"session role {session.reader_role!r} != transcript role"
            f" {transcript.reader_role!r}"
        )


def map_fixations(
    session: GazeSession,
    transcript: Transcript,
    tolerance_ms: int = 0,
) -> tuple[dict[str, list[int]], list[int]]:
    """Partition fixation indices over the transcript's findings.

    A fixation belongs to a finding iff its midpoint (onset + duration / 2)
    falls inside the finding sentence's window widened by ``tolerance_ms`` on
    both ends (closed interval). With tolerance > 0 a midpoint can fall inside
    several windows; it goes to the window whose center is nearest, ties to
    the earlier sentence. Every labeled sentence yields a key, possibly with
    an empty list; everything unassigned lands in the residual list.
    """
    if tolerance_ms < 0:
        raise ValueError(f"tolerance_ms must be nonnegative, got {tolerance_ms}")
    _check_same_reading(session, transcript)

    findings = transcript.finding_sentences()
    mapping: dict[str, list[int]] = {s.finding_label: [] for s in findings}
    residual: list[int] = []

    for i, fixation in enumerate(session.fixations):
        mid = fixation.midpoint_ms
        best = None
        best_distance = math.inf
        for sentence in findings:
            if sentence.begin_ms - tolerance_ms <= mid <= sentence.end_ms + tolerance_ms:
                distance = abs(mid - sentence.window_center_ms)
                # Strict < keeps the earlier sentence on a tie; findings
                # iterate in dictation order.
                if distance < best_distance:
                    best = sentence
                    best_distance = distance
        if best is None:
            residual.append(i)
        else:
            mapping[best.finding_label].append(i)

    return mapping, residual


def build_thought_graph(
    session: GazeSession,
    transcript: Transcript,
    tolerance_ms: int = 0,
) -> ThoughtGraph:
    """Build the finding-partitioned directed graph for one reading."""
    mapping, residual = map_fixations(session, transcript, tolerance_ms)
    nodes = tuple(
        GraphNode(index=i, x=f.x, y=f.y, onset_ms=f.onset_ms, duration_ms=f.duration_ms)
        for i, f in enumerate(session.fixations)
    )
    edges: list[tuple[int, int]] = []
    for members in mapping.values():
        edges.extend(zip(members, members[1:]))
    return ThoughtGraph(
        case_id=session.case_id,
        reader_role=session.reader_role,
        nodes=nodes,
        edges=tuple(edges),
        subgraphs={label: tuple(members) for label, members in mapping.items()},
        residual=tuple(residual),
    )


def summarize_subgraph(graph: ThoughtGraph, finding_label: str) -> SubgraphSummary:
    """Summary statistics for one finding's subgraph."""
    if finding_label not in graph.subgraphs:
        raise KeyError(f"unknown finding label {finding_label!r}")
    return summarize_nodes(finding_label, graph.member_nodes(finding_label))


def summarize_nodes(label: str, nodes: Sequence[GraphNode]) -> SubgraphSummary:
    if not nodes:
        return SubgraphSummary(
            finding_label=label,
            fixation_count=0,
            total_dwell_ms=0,
            centroid=None,
            bounding_box=None,
        )
    total_dwell = sum(n.duration_ms for n in nodes)
    cx = sum(n.x * n.duration_ms for n in nodes) / total_dwell
    cy = sum(n.y * n.duration_ms for n in nodes) / total_dwell
    return SubgraphSummary(
        finding_label=label,
        fixation_count=len(nodes),
        total_dwell_ms=total_dwell,
        centroid=(cx, cy),
        bounding_box=(
            min(n.x for n in nodes),
            min(n.y for n in nodes),
            max(n.x for n in nodes),
            max(n.y for n in nodes),
        ),
    )


def diff_findings(
    teacher: ThoughtGraph,
    student: ThoughtGraph,
    matcher: FindingMatcher | None = None,
) -> tuple[list[str], list[str]]:
    """Finding labels the student missed and the ones only the student has.

    Missed labels come back in teacher dictation order, extras in student
    dictation order.
    """
    if teacher.case_id != student.case_id:
        raise CaseMismatchError(
            f"teacher case_id {teacher.case_id!r} != student case_id"
            f" {student.case_id!r}"
        )
    matcher = matcher or ExactMatcher()
    teacher_labels = teacher.finding_labels()
    student_labels = student.finding_labels()
    mapping = matcher.match(teacher_labels, student_labels)

    missed = [label for label in teacher_labels if mapping.get(label) is None]
    matched = {s for s in mapping.values() if s is not None}
    extra = [label for label in student_labels if label not in matched]
    return missed, extra


def graph_to_dict(graph: ThoughtGraph) -> dict[str, Any]:
    """JSON-ready form with nodes, edges, subgraphs, and residual keys."""
    return {
        "case_id": graph.case_id,
        "reader_role": graph.reader_role,
        "nodes": [
            {
                "index": n.index,
                "x": n.x,
                "y": n.y,
                "onset_ms": n.onset_ms,
                "duration_ms": n.duration_ms,
            }
            for n in graph.nodes
        ],
        "edges": [list(edge) for edge in graph.edges],
        "subgraphs": {label: list(members) for label, members in graph.subgraphs.items()},
        "residual": list(graph.residual),
    }
