from __future__ import annotations

from pathlib import Path

import pytest

from gazecoach.core import (
    Fixation,
    GazeSession,
    Sentence,
    Transcript,
    parse_session,
    parse_transcript,
)

DATA_DIR = Path(__file__).parent / "data"
EXPERTS_DIR = DATA_DIR / "experts"
BOUNDARY_DIR = DATA_DIR / "boundary"


def load_case(case_dir: Path) -> tuple[GazeSession, Transcript]:
    session = parse_session((case_dir / "session.json").read_bytes())
    transcript = parse_transcript((case_dir / "transcript.json").read_bytes())
    return session, transcript


def make_session(case_id="c1", role="teacher", fixations=()):
    return GazeSession(case_id=case_id, reader_role=role, fixations=tuple(fixations))


def make_transcript(case_id="c1", role="teacher", sentences=()):
    return Transcript(case_id=case_id, reader_role=role, sentences=tuple(sentences))


def fx(x, y, onset, dur):
    return Fixation(x=x, y=y, onset_ms=onset, duration_ms=dur)


def sent(index, begin, end, label=None, text="..."):
    return Sentence(
        index=index, text=text, begin_ms=begin, end_ms=end, finding_label=label
    )


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def experts_dir() -> Path:
    return EXPERTS_DIR


@pytest.fixture(scope="session")
def expert_cases() -> list[tuple[GazeSession, Transcript]]:
    return [
        load_case(EXPERTS_DIR / name)
        for name in ("cxr-001", "cxr-002", "cxr-003")
    ]


@pytest.fixture(scope="session")
def cxr1(expert_cases):
    return expert_cases[0]


@pytest.fixture(scope="session")
def boundary_case() -> tuple[GazeSession, Transcript]:
    return load_case(BOUNDARY_DIR / "cxr-bound")
