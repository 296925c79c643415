"""Evaluation deliverables: delimited metric files and rendered figures.

Everything here is file-producing glue over evaluation results; figures use
the non-interactive Agg backend so runs work headless.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import LabelMatrix, MetricsReport


def save_headline_csv(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "value"])
        writer.writerow(["subset_accuracy", f"{report.subset_accuracy:.6f}"])
        writer.writerow(["macro_precision", f"{report.macro_precision:.6f}"])
        writer.writerow(["macro_recall", f"{report.macro_recall:.6f}"])
        writer.writerow(["macro_f1", f"{report.macro_f1:.6f}"])
        writer.writerow(["hamming_loss", f"{report.hamming_loss:.6f}"])
        writer.writerow(["latency_mean_ms", f"{report.latency.mean_ms:.3f}"])
        writer.writerow(["latency_p50_ms", f"{report.latency.p50_ms:.3f}"])
        writer.writerow(["latency_p95_ms", f"{report.latency.p95_ms:.3f}"])
        writer.writerow(["n_calls", str(report.latency.n_calls)])


def save_per_label_csv(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label", "precision", "recall", "f1", "support"])
        for label, stats in report.per_label.items():
            writer.writerow(
                [
                    label,
                    f"{stats['precision']:.6f}",
                    f"{stats['recall']:.6f}",
                    f"{stats['f1']:.6f}",
                    str(int(stats["support"])),
                ]
            )


def fig_per_label(report: MetricsReport, path: Path) -> None:
    """Grouped bars: precision/recall/f1 for each error label."""
    labels = list(report.per_label)
    metrics = ("precision", "recall", "f1")
    x = np.arange(len(labels))
    width = 0.27
    fig, ax = plt.subplots(figsize=(7, 4))
    for k, metric in enumerate(metrics):
        values = [report.per_label[label][metric] for label in labels]
        ax.bar(x + (k - 1) * width, values, width, label=metric)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=15)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Per-label detection quality")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_label_counts(matrix: LabelMatrix, path: Path) -> None:
    """True vs predicted positives per label."""
    true_counts = matrix.y_true.sum(axis=0)
    pred_counts = matrix.y_pred.sum(axis=0)
    x = np.arange(len(matrix.labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - width / 2, true_counts, width, label="injected")
    ax.bar(x + width / 2, pred_counts, width, label="predicted")
    ax.set_xticks(x)
    ax.set_xticklabels(matrix.labels, rotation=15)
    ax.set_ylabel("cases")
    ax.set_title("Label frequencies: injected vs predicted")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_complexity(
    c_errors: Sequence[int], row_hamming: Sequence[float], path: Path
) -> None:
    """Per-case complexity score against per-case label disagreement."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.scatter(c_errors, row_hamming, alpha=0.6)
    ax.set_xlabel("complexity score")
    ax.set_ylabel("per-case hamming")
    ax.set_title("Complexity vs disagreement")
    ax.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_case_times(totals_ms: Sequence[float], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(totals_ms, bins=min(20, max(5, len(totals_ms))), edgecolor="black")
    ax.set_xlabel("per-case time (ms)")
    ax.set_ylabel("cases")
    ax.set_title("Case processing time")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_all(
    report: MetricsReport,
    matrix: LabelMatrix,
    out_dir: Path,
    c_errors: Sequence[int] | None = None,
    case_totals_ms: Sequence[float] | None = None,
) -> list[Path]:
    """Write every deliverable the data supports; returns written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    figures = out_dir / "figures"
    figures.mkdir(exist_ok=True)
    written: list[Path] = []

    headline = out_dir / "metrics.csv"
    save_headline_csv(report, headline)
    written.append(headline)
    per_label = out_dir / "per_label.csv"
    save_per_label_csv(report, per_label)
    written.append(per_label)

    path = figures / "per_label_metrics.png"
    fig_per_label(report, path)
    written.append(path)
    path = figures / "label_counts.png"
    fig_label_counts(matrix, path)
    written.append(path)

    if c_errors is not None and len(c_errors) == len(matrix.cases):
        row_hamming = np.mean(
            matrix.y_true != matrix.y_pred, axis=1
        ).tolist()
        path = figures / "complexity_vs_disagreement.png"
        fig_complexity(c_errors, row_hamming, path)
        written.append(path)
    if case_totals_ms:
        path = figures / "case_times.png"
        fig_case_times(case_totals_ms, path)
        written.append(path)
    return written
