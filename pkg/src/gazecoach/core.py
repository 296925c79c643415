"""Domain types and JSON ingestion for gaze sessions and report transcripts.

A reading is captured as two files: a gaze session (time-ordered fixations in
normalized image coordinates) and a transcript (timestamped sentences, some of
which carry a diagnostic finding label). Both sides of a teacher/student pair
use the same formats.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Any

ROLE_TEACHER = "teacher"
ROLE_STUDENT = "student"
READER_ROLES = (ROLE_TEACHER, ROLE_STUDENT)

#: Feature columns each fixation contributes to the session matrix.
FEATURE_DIM = 4


class ValidationError(ValueError):
    """Input rejected by schema or invariant checks.

    ``path`` names the offending JSON field, e.g. ``fixations[3].x``.
    """

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class UnknownKeyWarning(UserWarning):
    """Unknown JSON key ignored while parsing in lenient mode."""


def normalize_label(label: str) -> str:
    """Canonical form of a finding label: trimmed and lowercased."""
    return label.strip().lower()


@dataclass(frozen=True)
class Fixation:
    """A single gaze fixation in normalized image coordinates."""

    x: float
    y: float
    onset_ms: int
    duration_ms: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.x <= 1.0:
            raise ValidationError("x", f"coordinate {self.x} outside [0, 1]")
        if not 0.0 <= self.y <= 1.0:
            raise ValidationError("y", f"coordinate {self.y} outside [0, 1]")
        if self.onset_ms < 0:
            raise ValidationError("onset_ms", f"negative onset {self.onset_ms}")
        if self.duration_ms <= 0:
            raise ValidationError("duration_ms", f"nonpositive duration {self.duration_ms}")

    @property
    def midpoint_ms(self) -> float:
        return self.onset_ms + self.duration_ms / 2


@dataclass(frozen=True)
class GazeSession:
    """One reader's fixation sequence for one case, sorted by onset."""

    case_id: str
    reader_role: str
    fixations: tuple[Fixation, ...]

    def __post_init__(self) -> None:
        if self.reader_role not in READER_ROLES:
            raise ValidationError("reader_role", f"unknown role {self.reader_role!r}")
        onsets = [f.onset_ms for f in self.fixations]
        if any(a > b for a, b in zip(onsets, onsets[1:])):
            raise ValidationError("fixations", "not sorted by onset_ms")

    def __len__(self) -> int:
        return len(self.fixations)

    def feature_matrix(self) -> list[tuple[float, float, int, int]]:
        """The t x 4 feature rows (x, y, onset_ms, duration_ms)."""
        return [(f.x, f.y, f.onset_ms, f.duration_ms) for f in self.fixations]


@dataclass(frozen=True)
class Sentence:
    """A dictated sentence with its time window and optional finding label."""

    index: int
    text: str
    begin_ms: int
    end_ms: int
    finding_label: str | None = None

    def __post_init__(self) -> None:
        if self.begin_ms >= self.end_ms:
            raise ValidationError(
                "begin_ms", f"begin_ms {self.begin_ms} is not before end_ms {self.end_ms}"
            )
        if self.finding_label is not None:
            normalized = normalize_label(self.finding_label)
            if not normalized:
                raise ValidationError("finding_label", "empty finding label")
            # Labels are stored in canonical form; normalize on construction.
            object.__setattr__(self, "finding_label", normalized)

    @property
    def window_center_ms(self) -> float:
        return (self.begin_ms + self.end_ms) / 2


@dataclass(frozen=True)
class Transcript:
    """One reader's dictated sentences for one case, sorted by begin time."""

    case_id: str
    reader_role: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self) -> None:
        if self.reader_role not in READER_ROLES:
            raise ValidationError("reader_role", f"unknown role {self.reader_role!r}")
        begins = [s.begin_ms for s in self.sentences]
        if any(a > b for a, b in zip(begins, begins[1:])):
            raise ValidationError("sentences", "not sorted by begin_ms")
        seen: dict[str, int] = {}
        last_labeled: Sentence | None = None
        for k, sentence in enumerate(self.sentences):
            if sentence.finding_label is None:
                continue
            if sentence.finding_label in seen:
                raise ValidationError(
                    f"sentences[{k}].finding_label",
                    f"duplicate finding label {sentence.finding_label!r}"
                    f" (first at sentences[{seen[sentence.finding_label]}])",
                )
            seen[sentence.finding_label] = k
            if last_labeled is not None and sentence.begin_ms < last_labeled.end_ms:
                raise ValidationError(
                    f"sentences[{k}]",
                    f"finding window [{sentence.begin_ms}, {sentence.end_ms}] overlaps"
                    f" window of {last_labeled.finding_label!r}"
                    f" [{last_labeled.begin_ms}, {last_labeled.end_ms}]",
                )
            if last_labeled is None or sentence.end_ms > last_labeled.end_ms:
                last_labeled = sentence

    def finding_sentences(self) -> tuple[Sentence, ...]:
        """Labeled sentences in dictation order."""
        return tuple(s for s in self.sentences if s.finding_label is not None)

    def finding_labels(self) -> tuple[str, ...]:
        return tuple(s.finding_label for s in self.finding_sentences())


@dataclass(frozen=True)
class ValidationReport:
    """Diagnostics from pairing a teacher and a student reading."""

    ok: bool
    problems: tuple[str, ...]
    warnings: tuple[str, ...]


# --- parsing ---------------------------------------------------------------

_FIXATION_KEYS = {"x", "y", "onset_ms", "duration_ms"}
_SENTENCE_KEYS = {"index", "text", "begin_ms", "end_ms", "finding_label"}


def _require(obj: dict[str, Any], key: str, path: str) -> Any:
    if key not in obj:
        raise ValidationError(f"{path}.{key}" if path else key, "missing required key")
    return obj[key]


def _check_unknown(obj: dict[str, Any], allowed: set[str], path: str, strict: bool) -> None:
    for key in obj:
        if key in allowed:
            continue
        where = f"{path}.{key}" if path else key
        if strict:
            raise ValidationError(where, "unknown key")
        warnings.warn(f"{where}: unknown key ignored", UnknownKeyWarning, stacklevel=3)


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ValidationError(path, f"expected string, got {type(value).__name__}")
    return value


def _as_int(value: Any, path: str) -> int:
    # bool is an int subclass; reject it explicitly.
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, f"expected integer, got {type(value).__name__}")
    return value


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected number, got {type(value).__name__}")
    return float(value)


def _load_json_object(raw_bytes: bytes) -> dict[str, Any]:
    try:
        data = json.loads(raw_bytes.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ValidationError("$", f"not valid UTF-8: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError("$", f"malformed JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("$", f"expected JSON object, got {type(data).__name__}")
    return data


def parse_session(raw_bytes: bytes, *, strict: bool = False) -> GazeSession:
    """Parse and validate a gaze session JSON document.

    Fixations are re-sorted by onset if needed; the sort is stable, so
    equal-onset fixations keep their input order.
    """
    data = _load_json_object(raw_bytes)
    _check_unknown(data, {"case_id", "reader_role", "fixations"}, "", strict)
    case_id = _as_str(_require(data, "case_id", ""), "case_id")
    role = _as_str(_require(data, "reader_role", ""), "reader_role")
    raw_fixations = _require(data, "fixations", "")
    if not isinstance(raw_fixations, list):
        raise ValidationError("fixations", "expected array")

    fixations: list[Fixation] = []
    for k, item in enumerate(raw_fixations):
        path = f"fixations[{k}]"
        if not isinstance(item, dict):
            raise ValidationError(path, "expected object")
        _check_unknown(item, _FIXATION_KEYS, path, strict)
        try:
            fixations.append(
                Fixation(
                    x=_as_number(_require(item, "x", path), f"{path}.x"),
                    y=_as_number(_require(item, "y", path), f"{path}.y"),
                    onset_ms=_as_int(_require(item, "onset_ms", path), f"{path}.onset_ms"),
                    duration_ms=_as_int(
                        _require(item, "duration_ms", path), f"{path}.duration_ms"
                    ),
                )
            )
        except ValidationError as exc:
            if exc.path.startswith(path):
                raise
            raise ValidationError(f"{path}.{exc.path}", exc.reason) from None

    fixations.sort(key=lambda f: f.onset_ms)
    try:
        return GazeSession(case_id=case_id, reader_role=role, fixations=tuple(fixations))
    except ValidationError as exc:
        raise ValidationError(exc.path, exc.reason) from None


def parse_transcript(raw_bytes: bytes, *, strict: bool = False) -> Transcript:
    """Parse and validate a transcript JSON document."""
    data = _load_json_object(raw_bytes)
    _check_unknown(data, {"case_id", "reader_role", "sentences"}, "", strict)
    case_id = _as_str(_require(data, "case_id", ""), "case_id")
    role = _as_str(_require(data, "reader_role", ""), "reader_role")
    raw_sentences = _require(data, "sentences", "")
    if not isinstance(raw_sentences, list):
        raise ValidationError("sentences", "expected array")

    sentences: list[Sentence] = []
    for k, item in enumerate(raw_sentences):
        path = f"sentences[{k}]"
        if not isinstance(item, dict):
            raise ValidationError(path, "expected object")
        _check_unknown(item, _SENTENCE_KEYS, path, strict)
        label = item.get("finding_label")
        if label is not None:
            label = _as_str(label, f"{path}.finding_label")
        try:
            sentences.append(
                Sentence(
                    index=_as_int(_require(item, "index", path), f"{path}.index"),
                    text=_as_str(_require(item, "text", path), f"{path}.text"),
                    begin_ms=_as_int(_require(item, "begin_ms", path), f"{path}.begin_ms"),
                    end_ms=_as_int(_require(item, "end_ms", path), f"{path}.end_ms"),
                    finding_label=label,
                )
            )
        except ValidationError as exc:
            if exc.path.startswith(path):
                raise
            raise ValidationError(f"{path}.{exc.path}", exc.reason) from None

    sentences.sort(key=lambda s: s.begin_ms)
    return Transcript(case_id=case_id, reader_role=role, sentences=tuple(sentences))


# --- serialization ---------------------------------------------------------


def session_to_dict(session: GazeSession) -> dict[str, Any]:
    return {
        "case_id": session.case_id,
        "reader_role": session.reader_role,
        "fixations": [
            {"x": f.x, "y": f.y, "onset_ms": f.onset_ms, "duration_ms": f.duration_ms}
            for f in session.fixations
        ],
    }


def transcript_to_dict(transcript: Transcript) -> dict[str, Any]:
    return {
        "case_id": transcript.case_id,
        "reader_role": transcript.reader_role,
        "sentences": [
            {
                "index": s.index,
                "text": s.text,
                "begin_ms": s.begin_ms,
                "end_ms": s.end_ms,
                "finding_label": s.finding_label,
            }
            for s in transcript.sentences
        ],
    }


def dump_json(payload: Any) -> bytes:
    """UTF-8, two-space indented, newline-terminated JSON used by all writers."""
    return (json.dumps(payload, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def serialize_session(session: GazeSession) -> bytes:
    return dump_json(session_to_dict(session))


def serialize_transcript(transcript: Transcript) -> bytes:
    return dump_json(transcript_to_dict(transcript))


# --- pair validation -------------------------------------------------------


def validate_pair(
    teacher: tuple[GazeSession, Transcript],
    student: tuple[GazeSession, Transcript],
) -> ValidationReport:
    """Diagnose whether a teacher and a student reading form a usable pair.

    Problems make the pair unusable; warnings flag degenerate but allowed
    inputs such as an empty student session.
    """
    problems: list[str] = []
    warns: list[str] = []

    for name, expected_role, (session, transcript) in (
        ("teacher", ROLE_TEACHER, teacher),
        ("student", ROLE_STUDENT, student),
    ):
        if session.case_id != transcript.case_id:
            problems.append(
                f"{name} session case_id {session.case_id!r} does not match"
                f" transcript case_id {transcript.case_id!r}"
            )
        if session.reader_role != transcript.reader_role:
            problems.append(
                f"{name} session role {session.reader_role!r} does not match"
                f" transcript role {transcript.reader_role!r}"
            )
        if session.reader_role != expected_role:
            problems.append(
                f"{name} pair has reader_role {session.reader_role!r},"
                f" expected {expected_role!r}"
            )
        if len(session) == 0:
            warns.append(f"{name} session has no fixations")

    if teacher[0].case_id != student[0].case_id:
        problems.append(
            f"case_id mismatch between teacher {teacher[0].case_id!r}"
            f" and student {student[0].case_id!r}"
        )

    return ValidationReport(ok=not problems, problems=tuple(problems), warnings=tuple(warns))
