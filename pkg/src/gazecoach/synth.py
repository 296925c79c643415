"""Synthetic student generation: inject known perceptual errors into expert
readings to get a labeled evaluation corpus.

Three transformations, one per error type. All of them remove or unlabel the
target finding's report sentence so the finding counts as missed; what they do
to the gaze stream is what distinguishes them:

- missed_fixation: the finding's fixations are deleted outright.
- brief_fixation: the finding's fixations stay but their durations are halved.
- knowledge_gap: the fixations stay bit-identical; only the report changes,
  its sentence text swapped for a plausible misreading and its label cleared.

Everything not tied to an injected finding is carried over bit-identical.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from .agents import ErrorType
from .core import (
    GazeSession,
    ROLE_STUDENT,
    Transcript,
    dump_json,
    serialize_session,
    serialize_transcript,
)
from .graph import map_fixations

ExpertPair = tuple[GazeSession, Transcript]


class SynthesisError(ValueError):
    """The requested transformation cannot be applied to this case."""


@dataclass(frozen=True)
class SyntheticCase:
    base_case_id: str
    variant_id: str
    injected: tuple[tuple[str, ErrorType], ...]
    student_session: GazeSession
    student_transcript: Transcript

    @property
    def ground_truth(self) -> tuple[tuple[str, ErrorType], ...]:
        return self.injected

    def truth_dict(self) -> dict[str, Any]:
        return {
            "base_case_id": self.base_case_id,
            "variant_id": self.variant_id,
            "injected": [
                {"finding_label": label, "error_type": err.value}
                for label, err in self.injected
            ],
        }


def load_distractors(path: str | Path | None = None) -> dict[str, str]:
    """Misreading table: finding label -> replacement sentence text."""
    if path is None:
        raw = (
            resources.files(__package__)
            .joinpath("data", "distractors.json")
            .read_text(encoding="utf-8")
        )
        table = json.loads(raw)
    else:
        with open(path, encoding="utf-8") as handle:
            table = json.load(handle)
    if not isinstance(table, dict):
        raise SynthesisError("distractor table must be a JSON object")
    return {str(k): str(v) for k, v in table.items()}


def _target_indices(expert: ExpertPair, finding: str) -> list[int]:
    session, transcript = expert
    mapping, _ = map_fixations(session, transcript)
    if finding not in mapping:
        raise SynthesisError(
            f"case {session.case_id!r} has no finding {finding!r}"
        )
    indices = mapping[finding]
    if not indices:
        raise SynthesisError(
            f"finding {finding!r} in case {session.case_id!r} has no mapped"
            " fixations"
        )
    return indices


def _as_student(session: GazeSession, fixations: Sequence) -> GazeSession:
    return GazeSession(
        case_id=session.case_id,
        reader_role=ROLE_STUDENT,
        fixations=tuple(fixations),
    )


def _drop_sentence(transcript: Transcript, finding: str) -> Transcript:
    return Transcript(
        case_id=transcript.case_id,
        reader_role=ROLE_STUDENT,
        sentences=tuple(
            s for s in transcript.sentences if s.finding_label != finding
        ),
    )


def synth_missed_fixation(expert: ExpertPair, finding: str) -> ExpertPair:
    """The student never looked: target fixations and sentence both removed."""
    session, transcript = expert
    targets = set(_target_indices(expert, finding))
    kept = [f for i, f in enumerate(session.fixations) if i not in targets]
    return _as_student(session, kept), _drop_sentence(transcript, finding)


def synth_reduced_fixation(expert: ExpertPair, finding: str) -> ExpertPair:
    """The student glanced: target durations halved (floor, min 1 ms), the
    sentence removed; onsets and everything else untouched."""
    session, transcript = expert
    targets = set(_target_indices(expert, finding))
    fixations = [
        replace(f, duration_ms=max(1, f.duration_ms // 2)) if i in targets else f
        for i, f in enumerate(session.fixations)
    ]
    return _as_student(session, fixations), _drop_sentence(transcript, finding)


def synth_incomplete_knowledge(
    expert: ExpertPair, finding: str, distractor_text: str
) -> ExpertPair:
    """The student looked but misread: fixations bit-identical, the finding's
    sentence keeps its slot and timestamps but carries the misreading text and
    no finding label, so the finding drops out of the student's subgraph count
    and its gaze lands in the residual pool."""
    session, transcript = expert
    _target_indices(expert, finding)
    sentences = []
    for s in transcript.sentences:
        if s.finding_label == finding:
            sentences.append(
                replace(s, text=distractor_text, finding_label=None)
            )
        else:
            sentences.append(s)
    student_transcript = Transcript(
        case_id=transcript.case_id,
        reader_role=ROLE_STUDENT,
        sentences=tuple(sentences),
    )
    return _as_student(session, session.fixations), student_transcript


def eligible_findings(
    expert: ExpertPair,
    error_type: ErrorType,
    distractors: Mapping[str, str],
) -> list[str]:
    """Findings this transformation can target, in dictation order."""
    session, transcript = expert
    mapping, _ = map_fixations(session, transcript)
    labels = [label for label, members in mapping.items() if members]
    if error_type is ErrorType.KNOWLEDGE_GAP:
        labels = [label for label in labels if label in distractors]
    return labels


def apply_error(
    expert: ExpertPair,
    finding: str,
    error_type: ErrorType,
    distractors: Mapping[str, str],
) -> ExpertPair:
    if error_type is ErrorType.MISSED_FIXATION:
        return synth_missed_fixation(expert, finding)
    if error_type is ErrorType.BRIEF_FIXATION:
        return synth_reduced_fixation(expert, finding)
    if error_type is ErrorType.KNOWLEDGE_GAP:
        text = distractors.get(finding)
        if text is None:
            raise SynthesisError(f"no distractor available for {finding!r}")
        return synth_incomplete_knowledge(expert, finding, text)
    raise SynthesisError(f"cannot synthesize error type {error_type!r}")


SYNTH_TYPES = (
    ErrorType.MISSED_FIXATION,
    ErrorType.BRIEF_FIXATION,
    ErrorType.KNOWLEDGE_GAP,
)


def generate_corpus(
    expert_cases: Sequence[ExpertPair],
    seed: int,
    per_type_count: int,
    errors_per_case: int = 1,
    distractors: Mapping[str, str] | None = None,
) -> tuple[list[SyntheticCase], dict[str, Any]]:
    """Balanced corpus: exactly per_type_count variants per error type.

    Base cases rotate round-robin within each type; target findings are drawn
    without replacement per variant from the case's eligible findings by a
    PRNG seeded once with `seed`, so equal seeds give byte-equal corpora. A
    multi-error variant injects the same error type into `errors_per_case`
    distinct findings, keeping per-type balance exact.
    """
    if not expert_cases:
        raise SynthesisError("no expert cases supplied")
    if per_type_count < 1:
        raise SynthesisError("per_type_count must be positive")
    if errors_per_case < 1:
        raise SynthesisError("errors_per_case must be positive")
    if distractors is None:
        distractors = load_distractors()

    cases = sorted(expert_cases, key=lambda pair: pair[0].case_id)
    for session, transcript in cases:
        for error_type in SYNTH_TYPES:
            pool = eligible_findings((session, transcript), error_type, distractors)
            if len(pool) < errors_per_case:
                raise SynthesisError(
                    f"case {session.case_id!r} has {len(pool)} findings"
                    f" eligible for {error_type.value}, needs {errors_per_case}"
                )

    rng = random.Random(seed)
    variants: list[SyntheticCase] = []
    for error_type in SYNTH_TYPES:
        for seq in range(per_type_count):
            expert = cases[seq % len(cases)]
            base_id = expert[0].case_id
            pool = eligible_findings(expert, error_type, distractors)
            chosen = rng.sample(pool, errors_per_case)
            pair = expert
            for finding in chosen:
                pair = apply_error(pair, finding, error_type, distractors)
            variants.append(
                SyntheticCase(
                    base_case_id=base_id,
                    variant_id=f"{base_id}__{error_type.value}__{seq:03d}",
                    injected=tuple((finding, error_type) for finding in chosen),
                    student_session=pair[0],
                    student_transcript=pair[1],
                )
            )

    entries = sorted(
        (
            {
                "base_case_id": case.base_case_id,
                "error_type": err.value,
                "finding_label": finding,
                "variant_id": case.variant_id,
            }
            for case in variants
            for finding, err in case.injected
        ),
        key=lambda e: (e["base_case_id"], e["error_type"], e["finding_label"], e["variant_id"]),
    )
    manifest = {
        "seed": seed,
        "per_type_count": per_type_count,
        "errors_per_case": errors_per_case,
        "counts": {t.value: per_type_count for t in SYNTH_TYPES},
        "entries": entries,
    }
    return variants, manifest


def write_corpus(
    out_dir: str | Path,
    variants: Sequence[SyntheticCase],
    manifest: dict[str, Any],
) -> None:
    """Corpus layout: one directory per variant plus a top-level manifest."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    for case in variants:
        case_dir = root / case.variant_id
        case_dir.mkdir(parents=True, exist_ok=True)
        (case_dir / "student.session.json").write_bytes(
            serialize_session(case.student_session)
        )
        (case_dir / "student.transcript.json").write_bytes(
            serialize_transcript(case.student_transcript)
        )
        (case_dir / "truth.json").write_bytes(dump_json(case.truth_dict()))
    (root / "manifest.json").write_bytes(dump_json(manifest))
