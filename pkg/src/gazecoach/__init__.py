"""Gaze-aware coaching engine: detect and explain why a trainee's reading of
an image missed findings that an expert's reading caught.

The pipeline pairs eye-tracking sessions with dictated transcripts, partitions
each reading into per-finding fixation subgraphs, scores the structural
disagreement between the two readings, recruits analysis agents proportional
to that score, and consolidates their verdicts into a structured report. A
seeded corpus generator and a multilabel evaluation harness close the loop.
"""

from .agents import (
    ErrorType,
    Evidence,
    FeedbackReport,
    FindingFeedback,
    PetVerdict,
    classify_evidence,
    compute_evidence,
    consolidate,
    reference_classify,
    report_json,
    run_case,
    run_pet,
    run_principal,
)
from .complexity import (
    POLICY_BY_COMPLEXITY,
    POLICY_BY_ERROR_COUNT,
    ComparisonPlan,
    ComparisonTask,
    ComplexityAssessment,
    agent_count,
    assess,
    error_complexity,
    plan_comparisons,
)
from .config import (
    BackendSettings,
    ConfigError,
    RunConfig,
    Thresholds,
    config_from_dict,
    load_config,
)
from .core import (
    Fixation,
    GazeSession,
    Sentence,
    Transcript,
    ValidationError,
    ValidationReport,
    parse_session,
    parse_transcript,
    serialize_session,
    serialize_transcript,
    validate_pair,
)
from .evaluation import (
    LabelMatrix,
    LatencyStats,
    MetricsReport,
    build_matrix,
    score,
    time_stats,
)
from .gateway import (
    ChatCompletion,
    ChatMessage,
    ChatRequest,
    RemoteBackend,
    RetryPolicy,
    RunJournal,
    ScriptedBackend,
    complete,
    with_retry,
)
from .graph import (
    ExactMatcher,
    SubgraphSummary,
    ThoughtGraph,
    build_thought_graph,
    diff_findings,
    map_fixations,
    summarize_subgraph,
)
from .synth import SyntheticCase, generate_corpus, write_corpus

__version__ = "0.1.0"

__all__ = [
    "BackendSettings",
    "ChatCompletion",
    "ChatMessage",
    "ChatRequest",
    "ComparisonPlan",
    "ComparisonTask",
    "ComplexityAssessment",
    "ConfigError",
    "ErrorType",
    "Evidence",
    "ExactMatcher",
    "FeedbackReport",
    "FindingFeedback",
    "Fixation",
    "GazeSession",
    "LabelMatrix",
    "LatencyStats",
    "MetricsReport",
    "PetVerdict",
    "POLICY_BY_COMPLEXITY",
    "POLICY_BY_ERROR_COUNT",
    "RemoteBackend",
    "RetryPolicy",
    "RunConfig",
    "RunJournal",
    "ScriptedBackend",
    "Sentence",
    "SubgraphSummary",
    "SyntheticCase",
    "ThoughtGraph",
    "Thresholds",
    "Transcript",
    "ValidationError",
    "ValidationReport",
    "agent_count",
    "assess",
    "build_matrix",
    "build_thought_graph",
    "classify_evidence",
    "complete",
    "compute_evidence",
    "config_from_dict",
    "consolidate",
    "diff_findings",
    "error_complexity",
    "generate_corpus",
    "load_config",
    "map_fixations",
    "parse_session",
    "parse_transcript",
    "plan_comparisons",
    "reference_classify",
    "report_json",
    "run_case",
    "run_pet",
    "run_principal",
    "score",
    "serialize_session",
    "serialize_transcript",
    "summarize_subgraph",
    "time_stats",
    "validate_pair",
    "with_retry",
    "write_corpus",
]
