"""Error-complexity scoring and comparison planning.

Complexity is computed from subgraph counts alone: delta_n = |n_T - n_S| and
c_error = delta_n * n_S. The score sizes the pool of analysis agents, and the
plan enumerates which (missed finding, student evidence pool) comparisons
those agents perform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .graph import FindingMatcher, ThoughtGraph, diff_findings

POLICY_BY_COMPLEXITY = "by_complexity"
POLICY_BY_ERROR_COUNT = "by_error_count"
POLICIES = (POLICY_BY_COMPLEXITY, POLICY_BY_ERROR_COUNT)

# Pool sentinels; real pools carry the finding label of a student subgraph.
RESIDUAL_POOL = "RESIDUAL"
EMPTY_POOL = "EMPTY"


def error_complexity(n_teacher: int, n_student: int) -> tuple[int, int]:
    """(delta_n, c_error) from the two subgraph counts."""
    if n_teacher < 0 or n_student < 0:
        raise ValueError("subgraph counts must be nonnegative")
    delta_n = abs(n_teacher - n_student)
    return delta_n, delta_n * n_student


def agent_count(
    c_error: int, missed_count: int, policy: str, cap: int | None = None
) -> int:
    """Number of analysis agents to recruit.

    Zero whenever c_error is zero: a zero score means the readings agree at
    the structural level and no analysis is spent. Otherwise by_complexity
    recruits min(c_error, cap) and by_error_count recruits
    min(missed_count, cap); cap None means unbounded.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown recruitment policy {policy!r}")
    if cap is not None and cap < 1:
        raise ValueError(f"agent cap must be positive, got {cap}")
    if c_error < 0 or missed_count < 0:
        raise ValueError("c_error and missed_count must be nonnegative")
    if c_error == 0:
        return 0
    n = c_error if policy == POLICY_BY_COMPLEXITY else missed_count
    return n if cap is None else min(n, cap)


@dataclass(frozen=True)
class ComplexityAssessment:
    case_id: str
    n_teacher: int
    n_student: int
    delta_n: int
    c_error: int
    n_agents: int
    policy: str
    agent_cap: int | None
    missed: tuple[str, ...]
    extra: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "n_teacher": self.n_teacher,
            "n_student": self.n_student,
            "delta_n": self.delta_n,
            "c_error": self.c_error,
            "n_agents": self.n_agents,
            "policy": self.policy,
            "agent_cap": self.agent_cap,
            "missed": list(self.missed),
            "extra": list(self.extra),
        }


@dataclass(frozen=True)
class ComparisonTask:
    """One unit of agent work: inspect one student pool for one missed finding."""

    task_id: str
    missed_finding_label: str
    student_subgraph_label: str
    agent_slot: int


@dataclass(frozen=True)
class ComparisonPlan:
    case_id: str
    policy: str
    n_agents: int
    tasks: tuple[ComparisonTask, ...] = field(default_factory=tuple)

    def tasks_for_finding(self, label: str) -> tuple[ComparisonTask, ...]:
        return tuple(t for t in self.tasks if t.missed_finding_label == label)

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "policy": self.policy,
            "n_agents": self.n_agents,
            "tasks": [
                {
                    "task_id": t.task_id,
                    "missed_finding_label": t.missed_finding_label,
                    "student_subgraph_label": t.student_subgraph_label,
                    "agent_slot": t.agent_slot,
                }
                for t in self.tasks
            ],
        }


def assess(
    teacher: ThoughtGraph,
    student: ThoughtGraph,
    matcher: FindingMatcher | None = None,
    policy: str = POLICY_BY_COMPLEXITY,
    agent_cap: int | None = None,
) -> ComplexityAssessment:
    """Score the structural disagreement between two readings of one case.

    delta_n depends only on subgraph counts; the missed list comes from label
    diffing, so its length can exceed delta_n when the student both misses
    findings and adds spurious ones. Both views are kept.
    """
    missed, extra = diff_findings(teacher, student, matcher)
    delta_n, c_error = error_complexity(teacher.n, student.n)
    return ComplexityAssessment(
        case_id=teacher.case_id,
        n_teacher=teacher.n,
        n_student=student.n,
        delta_n=delta_n,
        c_error=c_error,
        n_agents=agent_count(c_error, len(missed), policy, agent_cap),
        policy=policy,
        agent_cap=agent_cap,
        missed=tuple(missed),
        extra=tuple(extra),
    )


def student_pools(student: ThoughtGraph) -> list[str]:
    """Evidence pools worth inspecting: nonempty subgraphs, then RESIDUAL."""
    pools = [label for label, members in student.subgraphs.items() if members]
    if student.residual:
        pools.append(RESIDUAL_POOL)
    return pools


def plan_comparisons(
    assessment: ComplexityAssessment,
    teacher: ThoughtGraph,
    student: ThoughtGraph,
) -> ComparisonPlan:
    """Lay out agent tasks for every missed finding.

    Each missed finding is compared against every nonempty student pool; when
    the student shows no gaze evidence at all, a single EMPTY-pool task per
    finding keeps the finding analyzable. Tasks are assigned to agent slots
    round-robin under by_complexity, or one slot per missed finding under
    by_error_count (wrapping only if a cap shrank the slot count). A plan
    with zero agents carries no tasks.
    """
    if teacher.case_id != student.case_id:
        raise ValueError(
            f"teacher case_id {teacher.case_id!r} != student case_id"
            f" {student.case_id!r}"
        )
    if assessment.case_id != student.case_id:
        raise ValueError(
            f"assessment case_id {assessment.case_id!r} != graph case_id"
            f" {student.case_id!r}"
        )
    if assessment.n_agents == 0:
        return ComparisonPlan(
            case_id=assessment.case_id,
            policy=assessment.policy,
            n_agents=0,
            tasks=(),
        )

    pools = student_pools(student) or [EMPTY_POOL]
    tasks: list[ComparisonTask] = []
    for f_idx, finding in enumerate(assessment.missed):
        for p_idx, pool in enumerate(pools):
            if assessment.policy == POLICY_BY_COMPLEXITY:
                slot = len(tasks) % assessment.n_agents
            else:
                slot = f_idx % assessment.n_agents
            # Zero-padded ids keep lexicographic order == plan order.
            tasks.append(
                ComparisonTask(
                    task_id=f"f{f_idx:02d}p{p_idx:02d}",
                    missed_finding_label=finding,
                    student_subgraph_label=pool,
                    agent_slot=slot,
                )
            )
    return ComparisonPlan(
        case_id=assessment.case_id,
        policy=assessment.policy,
        n_agents=assessment.n_agents,
        tasks=tuple(tasks),
    )
