"""Competition metrics, runtime measurement, and report emission.

Per-category precision/recall/F1 with the zero-denominator convention
(a metric whose denominator is zero is 0), unweighted averaging across
categories, and the combined quality/latency submission score
0.75 * avg_F1 + 0.25 * (max_runtime - measured_runtime) / max_runtime.
"""

from __future__ import annotations

import io
import statistics
import time
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import CommentExample, build_input_finetune


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class CategoryResult:
    language: str
    category: str
    precision: float
    recall: float
    f1: float
    runtime_seconds: float


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[CategoryResult, ...]
    avg_precision: float
    avg_recall: float
    avg_f1: float
    measured_avg_runtime: float
    max_avg_runtime: float
    submission_score: float


def confusion_counts(predictions, labels) -> ConfusionCounts:
    """Binary confusion counts; the positive class is label 1."""
    preds = np.asarray(predictions, dtype=np.int64)
    labs = np.asarray(labels, dtype=np.int64)
    if preds.shape != labs.shape:
        raise ValueError(f"length mismatch: {preds.shape} predictions vs {labs.shape} labels")
    tp = int(np.sum((preds == 1) & (labs == 1)))
    fp = int(np.sum((preds == 1) & (labs == 0)))
    fn = int(np.sum((preds == 0) & (labs == 1)))
    tn = int(np.sum((preds == 0) & (labs == 0)))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def category_metrics(c: ConfusionCounts) -> tuple[float, float, float]:
    """(precision, recall, f1); any zero denominator yields 0 for that metric."""
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return precision, recall, f1


def aggregate_metrics(rows: Sequence[tuple[float, float, float]]) -> tuple[float, float, float]:
    """Unweighted arithmetic mean of (precision, recall, f1) rows."""
    if not rows:
        raise ValueError("aggregate_metrics requires at least one row")
    n = len(rows)
    return (
        sum(r[0] for r in rows) / n,
        sum(r[1] for r in rows) / n,
        sum(r[2] for r in rows) / n,
    )


def submission_score(avg_f1: float, measured_avg_runtime: float, max_avg_runtime: float) -> float:
    """0.75 * avg_f1 + 0.25 * (max - measured) / max, runtime term clamped at 0."""
    if max_avg_runtime <= 0:
        raise ValueError(f"max_avg_runtime must be positive, got {max_avg_runtime}")
    if measured_avg_runtime < 0:
        raise ValueError(f"measured_avg_runtime must be nonnegative, got {measured_avg_runtime}")
    if measured_avg_runtime > max_avg_runtime:
        warnings.warn(
            f"measured runtime {measured_avg_runtime:.3f}s exceeds the budget "
            f"{max_avg_runtime:.3f}s; runtime term clamped to 0",
            stacklevel=2,
        )
        runtime_term = 0.0
    else:
        runtime_term = (max_avg_runtime - measured_avg_runtime) / max_avg_runtime
    return 0.75 * avg_f1 + 0.25 * runtime_term


def measure_runtime(
    predict: Callable[[list[str]], np.ndarray],
    test_examples: Sequence[CommentExample],
    repetitions: int = 3,
) -> float:
    """Median wall-clock seconds for one full test-set inference pass.

    The timed region covers input construction, tokenization, forward
    passes, and argmax. Run this alone (no concurrent jobs) for the
    number to mean anything.
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    if not test_examples:
        warnings.warn("empty test set; measured runtime is 0", stacklevel=2)
        return 0.0
    timings = []
    for _ in range(repetitions):
        start = time.perf_counter()
        texts = [build_input_finetune(ex.class_name, ex.sentence) for ex in test_examples]
        predict(texts)
        timings.append(time.perf_counter() - start)
    return statistics.median(timings)


def build_report(rows: Sequence[CategoryResult], max_avg_runtime: float) -> MetricsReport:
    avg_p, avg_r, avg_f1 = aggregate_metrics([(r.precision, r.recall, r.f1) for r in rows])
    measured = sum(r.runtime_seconds for r in rows) / len(rows)
    score = submission_score(avg_f1, measured, max_avg_runtime)
    return MetricsReport(
        rows=tuple(rows),
        avg_precision=avg_p,
        avg_recall=avg_r,
        avg_f1=avg_f1,
        measured_avg_runtime=measured,
        max_avg_runtime=max_avg_runtime,
        submission_score=score,
    )


def report_to_csv(report: MetricsReport) -> str:
    """Machine-readable rows at full precision."""
    buf = io.StringIO()
    buf.write("language,category,precision,recall,f1,runtime_s\n")
    for r in report.rows:
        buf.write(
            f"{r.language},{r.category},{r.precision!r},{r.recall!r},{r.f1!r},{r.runtime_seconds!r}\n"
        )
    return buf.getvalue()


def render_report(report: MetricsReport) -> str:
    """Human-readable table (2-decimal display) plus the submission score line."""
    lines = []
    header = f"{'Language':<10} {'Category':<26} {'P':>6} {'R':>6} {'F1':>6} {'Runtime(s)':>11}"
    lines.append(header)
    lines.append("-" * len(header))
    for r in report.rows:
        lines.append(
            f"{r.language:<10} {r.category:<26} {r.precision:>6.2f} {r.recall:>6.2f} "
            f"{r.f1:>6.2f} {r.runtime_seconds:>11.4f}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'Overall':<10} {'':<26} {report.avg_precision:>6.2f} {report.avg_recall:>6.2f} "
        f"{report.avg_f1:>6.2f} {report.measured_avg_runtime:>11.4f}"
    )
    lines.append(
        f"submission_score = {report.submission_score:.3f} "
        f"(avg F1 {report.avg_f1:.4f}, runtime {report.measured_avg_runtime:.4f}s "
        f"of {report.max_avg_runtime:.4f}s budget)"
    )
    return "\n".join(lines) + "\n"
