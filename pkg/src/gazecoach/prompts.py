"""Versioned prompt rendering for analysis agents.

Templates are plain text files shipped with the package, one file per prompt
per version, using string.Template placeholders. The first line of every user
prompt identifies its task, which lets scripted test backends key replies by
content prefix.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template
from typing import Sequence

from .graph import GraphNode, SubgraphSummary

TEMPLATE_VERSION = "v1"

BULLETIN_HEADER = "=== shared bulletin: verdicts so far ==="


@lru_cache(maxsize=None)
def _template(name: str) -> Template:
    path = resources.files(__package__).joinpath("templates", f"{name}_{TEMPLATE_VERSION}.txt")
    return Template(path.read_text(encoding="utf-8"))


def format_fixations(nodes: Sequence[GraphNode]) -> str:
    """One line per fixation, in the order given (scanpath order)."""
    if not nodes:
        return "(no fixations recorded in this pool)"
    return "\n".join(
        f"{k}. position ({n.x:.3f}, {n.y:.3f}), onset {n.onset_ms} ms,"
        f" duration {n.duration_ms} ms"
        for k, n in enumerate(nodes, start=1)
    )


def format_summary(summary: SubgraphSummary) -> str:
    if summary.fixation_count == 0 or summary.centroid is None:
        return "(the teacher dictated this finding without recorded gaze)"
    cx, cy = summary.centroid
    x0, y0, x1, y1 = summary.bounding_box or (cx, cy, cx, cy)
    return (
        f"{summary.fixation_count} fixations, total dwell"
        f" {summary.total_dwell_ms} ms, centroid ({cx:.3f}, {cy:.3f}),"
        f" bounding box ({x0:.3f}, {y0:.3f})-({x1:.3f}, {y1:.3f})"
    )


def render_bulletin(entries: Sequence[str]) -> str:
    """The block appended to a PET prompt in communication mode.

    Empty when there are no entries or communication is off, so prompts with
    and without communication differ only by this block.
    """
    if not entries:
        return ""
    body = "\n".join(f"- {entry}" for entry in entries)
    return f"\n\n{BULLETIN_HEADER}\n{body}"


def pet_prompts(
    task_id: str,
    case_id: str,
    finding: str,
    pool: str,
    teacher_summary: SubgraphSummary,
    student_nodes: Sequence[GraphNode],
    bulletin: Sequence[str] = (),
) -> tuple[str, str]:
    """(system, user) texts for one comparison task."""
    system = _template("pet_system").template
    user = _template("pet_user").substitute(
        task_id=task_id,
        case_id=case_id,
        finding=finding,
        pool=pool,
        teacher_summary=format_summary(teacher_summary),
        student_pool=format_fixations(student_nodes),
        bulletin=render_bulletin(bulletin),
    )
    return system, user


def matcher_prompts(
    case_id: str,
    teacher_labels: Sequence[str],
    student_labels: Sequence[str],
) -> tuple[str, str]:
    """(system, user) texts for the finding-matching call."""

    def block(labels: Sequence[str]) -> str:
        if not labels:
            return "(none)"
        return "\n".join(f"- {label}" for label in labels)

    system = _template("matcher_system").template
    user = _template("matcher_user").substitute(
        case_id=case_id,
        teacher_labels=block(teacher_labels),
        student_labels=block(student_labels),
    )
    return system, user


def repair_prompt(error: str) -> str:
    return _template("repair_user").substitute(error=error)
