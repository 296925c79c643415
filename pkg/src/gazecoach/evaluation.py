"""Multilabel scoring of predicted vs injected error types, plus run timing.

The label vocabulary is fixed to the three error types in canonical order, so
matrices, metrics, and report tables line up across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .agents import ERROR_LABELS

LABELS: tuple[str, ...] = tuple(e.value for e in ERROR_LABELS)


@dataclass(frozen=True)
class LabelMatrix:
    cases: tuple[str, ...]
    labels: tuple[str, ...]
    y_true: np.ndarray
    y_pred: np.ndarray

    def __post_init__(self) -> None:
        want = (len(self.cases), len(self.labels))
        if self.y_true.shape != want or self.y_pred.shape != want:
            raise ValueError(
                f"matrix shapes {self.y_true.shape}/{self.y_pred.shape} do not"
                f" match {want}"
            )
        for name, m in (("y_true", self.y_true), ("y_pred", self.y_pred)):
            if m.size and not np.isin(m, (0, 1)).all():
                raise ValueError(f"{name} entries must be 0 or 1")


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float = 0.0
    p50_ms: float = 0.0
    p95_ms: float = 0.0
    n_calls: int = 0

    def to_dict(self) -> dict[str, float | int]:
        return {
            "mean_ms": self.mean_ms,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "n_calls": self.n_calls,
        }


@dataclass(frozen=True)
class MetricsReport:
    subset_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    hamming_loss: float
    per_label: dict[str, dict[str, float]]
    latency: LatencyStats = field(default_factory=LatencyStats)

    def to_dict(self) -> dict[str, Any]:
        return {
            "subset_accuracy": self.subset_accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "hamming_loss": self.hamming_loss,
            "per_label": self.per_label,
            "latency": self.latency.to_dict(),
        }


def _encode(labels: Iterable[str], vocabulary: Sequence[str], where: str) -> np.ndarray:
    row = np.zeros(len(vocabulary), dtype=np.int8)
    for label in labels:
        try:
            row[vocabulary.index(label)] = 1
        except ValueError:
            raise ValueError(f"unknown label {label!r} in {where}") from None
    return row


def build_matrix(
    predicted: Sequence[tuple[str, Sequence[str]]],
    truths: Mapping[str, Sequence[str]],
) -> LabelMatrix:
    """Indicator matrices over (case, label).

    `predicted` pairs a case key with its consolidated error labels; `truths`
    maps the same keys to injected labels. Every predicted case needs a truth.
    """
    cases = []
    true_rows = []
    pred_rows = []
    for case_key, labels in predicted:
        if case_key not in truths:
            raise ValueError(f"no ground truth for case {case_key!r}")
        cases.append(case_key)
        pred_rows.append(_encode(labels, LABELS, f"prediction {case_key!r}"))
        true_rows.append(_encode(truths[case_key], LABELS, f"truth {case_key!r}"))
    shape = (len(cases), len(LABELS))
    return LabelMatrix(
        cases=tuple(cases),
        labels=LABELS,
        y_true=np.array(true_rows, dtype=np.int8).reshape(shape),
        y_pred=np.array(pred_rows, dtype=np.int8).reshape(shape),
    )


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def score(matrix: LabelMatrix, latency: LatencyStats | None = None) -> MetricsReport:
    """All metrics over one matrix.

    Subset accuracy counts rows predicted exactly; precision/recall/f1 use
    the 0/0 -> 0 convention per label and macro-average without weighting;
    hamming loss is the mean per-cell disagreement.
    """
    if len(matrix.cases) == 0:
        raise ValueError("cannot score an empty matrix")
    y_true = matrix.y_true.astype(np.int64)
    y_pred = matrix.y_pred.astype(np.int64)

    subset = float(np.mean((y_true == y_pred).all(axis=1)))
    hamming = float(np.mean(y_true != y_pred))

    per_label: dict[str, dict[str, float]] = {}
    precisions, recalls, f1s = [], [], []
    for j, label in enumerate(matrix.labels):
        t, p = y_true[:, j], y_pred[:, j]
        tp = int(np.sum((t == 1) & (p == 1)))
        fp = int(np.sum((t == 0) & (p == 1)))
        fn = int(np.sum((t == 1) & (p == 0)))
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        per_label[label] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": int(np.sum(t)),
        }
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)

    return MetricsReport(
        subset_accuracy=subset,
        macro_precision=float(np.mean(precisions)),
        macro_recall=float(np.mean(recalls)),
        macro_f1=float(np.mean(f1s)),
        hamming_loss=hamming,
        per_label=per_label,
        latency=latency or LatencyStats(),
    )


def nearest_rank(values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not values:
        return 0.0
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    ordered = sorted(values)
    rank = math.ceil(percentile / 100 * len(ordered))
    return float(ordered[rank - 1])


def case_totals(records: Iterable[Mapping[str, Any]]) -> tuple[dict[str, float], int]:
    """Per-case wall-clock from one run journal, plus the backend-call count.

    A case's wall-clock is the sum of its backend-call latencies (call
    records whose request_tag starts with "<case_key>/") plus the case
    record's local_ms.
    """
    calls: list[Mapping[str, Any]] = []
    cases: list[Mapping[str, Any]] = []
    for record in records:
        kind = record.get("kind")
        if kind == "call":
            calls.append(record)
        elif kind == "case":
            cases.append(record)

    by_case: dict[str, float] = {}
    for record in cases:
        key = str(record["case_key"])
        by_case[key] = by_case.get(key, 0.0) + float(record.get("local_ms", 0.0))
    for record in calls:
        tag = str(record.get("request_tag", ""))
        key = tag.split("/", 1)[0]
        if key in by_case:
            by_case[key] += float(record.get("latency_ms", 0.0))
    return by_case, len(calls)


def time_stats(records: Iterable[Mapping[str, Any]]) -> LatencyStats:
    """Latency summary over one run journal; n_calls counts backend calls,
    not cases, and an empty journal gives a zeroed summary."""
    by_case, n_calls = case_totals(records)
    totals = list(by_case.values())
    if not totals:
        return LatencyStats(n_calls=n_calls)
    return LatencyStats(
        mean_ms=sum(totals) / len(totals),
        p50_ms=nearest_rank(totals, 50),
        p95_ms=nearest_rank(totals, 95),
        n_calls=n_calls,
    )


def render_table(report: MetricsReport) -> str:
    """Aligned text table: the headline metrics row, then per-label rows."""
    headline_names = ("accuracy", "precision", "recall", "f1", "hamming_loss")
    headline_values = (
        report.subset_accuracy,
        report.macro_precision,
        report.macro_recall,
        report.macro_f1,
        report.hamming_loss,
    )
    width = 14
    lines = [
        "".join(f"{name:>{width}}" for name in headline_names),
        "".join(f"{value:>{width}.4f}" for value in headline_values),
        "",
        f"{'label':<20}{'precision':>12}{'recall':>12}{'f1':>12}{'support':>12}",
    ]
    for label, stats in report.per_label.items():
        lines.append(
            f"{label:<20}{stats['precision']:>12.4f}{stats['recall']:>12.4f}"
            f"{stats['f1']:>12.4f}{int(stats['support']):>12d}"
        )
    latency = report.latency
    lines.append("")
    lines.append(
        f"latency: mean {latency.mean_ms:.2f} ms, p50 {latency.p50_ms:.2f} ms,"
        f" p95 {latency.p95_ms:.2f} ms over {latency.n_calls} calls"
    )
    return "\n".join(lines) + "\n"
