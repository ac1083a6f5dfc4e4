"""Confusion-derived metrics, precision-recall curves, and fold-averaged reports.

Conventions: zero-denominator metrics evaluate to 0 and carry an
``undefined`` flag so report averages stay finite; tied scores collapse to
one PR point (thresholds, not samples, index the average-precision sum);
the model-average row is the unweighted macro mean over the three classes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .nn import Prediction

CLASS_LABELS = ("COVID-19", "Non-COVID-19", "No Finding")


class UnknownLabel(Exception):
    pass


class NoPositives(Exception):
    pass


class EmptyFold(Exception):
    pass


@dataclass(frozen=True)
class MetricValue:
    """A metric plus its zero-denominator flag."""

    value: float
    undefined: bool = False

    def render(self, places: int = 3) -> str:
        return f"{self.value:.{places}f}" + ("*" if self.undefined else "")


@dataclass
class ConfusionMatrix:
    """counts[t][p] = samples with true class t predicted as p."""

    labels: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"label {label!r} not in {self.labels}") from None

    def tp(self, label: str) -> int:
        c = self.index(label)
        return int(self.counts[c, c])

    def fp(self, label: str) -> int:
        c = self.index(label)
        return int(self.counts[:, c].sum() - self.counts[c, c])

    def fn(self, label: str) -> int:
        c = self.index(label)
        return int(self.counts[c, :].sum() - self.counts[c, c])

    def tn(self, label: str) -> int:
        return self.total - self.tp(label) - self.fp(label) - self.fn(label)


def confusion(true_labels: Sequence[str], predicted_labels: Sequence[str],
              labels: Sequence[str] = CLASS_LABELS) -> ConfusionMatrix:
    if len(true_labels) != len(predicted_labels):
        raise ValueError("label sequences differ in length")
    labels = tuple(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index:
            raise UnknownLabel(f"true label {t!r} not in {labels}")
        if p not in index:
            raise UnknownLabel(f"predicted label {p!r} not in {labels}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(labels, counts)


def _ratio(num: int, den: int) -> MetricValue:
    if den == 0:
        return MetricValue(0.0, undefined=True)
    return MetricValue(num / den)


def accuracy(cm: ConfusionMatrix) -> MetricValue:
    return _ratio(int(np.trace(cm.counts)), cm.total)


def precision(cm: ConfusionMatrix, label: str) -> MetricValue:
    return _ratio(cm.tp(label), cm.tp(label) + cm.fp(label))


def recall(cm: ConfusionMatrix, label: str) -> MetricValue:
    return _ratio(cm.tp(label), cm.tp(label) + cm.fn(label))


def f1(cm: ConfusionMatrix, label: str) -> MetricValue:
    tp, fp, fn = cm.tp(label), cm.fp(label), cm.fn(label)
    return _ratio(2 * tp, 2 * tp + fp + fn)


def f1_score(precision_value: float, recall_value: float) -> float:
    """Harmonic-mean form on plain numbers; 0 when both rates are 0."""
    if precision_value + recall_value == 0:
        return 0.0
    return 2.0 * precision_value * recall_value / (precision_value + recall_value)


# ---------------------------------------------------------------------------
# Precision-recall
# ---------------------------------------------------------------------------


@dataclass
class PRCurve:
    """(recall, precision) at each distinct score threshold, rank order."""

    points: list[tuple[float, float]]
    positive_count: int
    baseline: float  # prevalence: precision of a can't-distinguish classifier


def pr_curve(scores: Sequence[float], truths: Sequence[int]) -> PRCurve:
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths).astype(np.int64)
    if scores.shape != truths.shape or scores.ndim != 1:
        raise ValueError("scores and truths must be equal-length vectors")
    positives = int(truths.sum())
    if positives == 0:
        raise NoPositives("at least one positive sample required")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp_cum = np.cumsum(truths[order])
    n = len(scores)
    points: list[tuple[float, float]] = []
    for i in range(n):
        # Tied scores share the final point of the tied block.
        if i + 1 < n and sorted_scores[i + 1] == sorted_scores[i]:
            continue
        rank = i + 1
        tp = int(tp_cum[i])
        points.append((tp / positives, tp / rank))
    return PRCurve(points=points, positive_count=positives, baseline=positives / n)


def average_precision(curve: PRCurve) -> float:
    """Sum of (R_n - R_{n-1}) * P_n over the curve, R_0 = 0; no interpolation."""
    ap = 0.0
    prev_recall = 0.0
    for recall_n, precision_n in curve.points:
        ap += (recall_n - prev_recall) * precision_n
        prev_recall = recall_n
    return ap


# ---------------------------------------------------------------------------
# Fold-averaged evaluation report
# ---------------------------------------------------------------------------


@dataclass
class ReportRow:
    name: str
    image_count: int
    precision: MetricValue
    recall: MetricValue
    f1: MetricValue
    ap: MetricValue


@dataclass
class EvalReport:
    rows: list[ReportRow]  # fixed order: Model Average, then the classes
    fold_count: int
    labels: tuple[str, ...] = CLASS_LABELS


def _mean(values: list[MetricValue]) -> MetricValue:
    return MetricValue(
        value=float(np.mean([v.value for v in values])),
        undefined=any(v.undefined for v in values),
    )


def evaluate(samples: Sequence[tuple[Prediction, str]], folds: Sequence[int],
             labels: Sequence[str] = CLASS_LABELS,
             fold_count: Optional[int] = None) -> EvalReport:
    """Per-fold metrics, unweighted-averaged across folds.

    Per-class AP treats that class's probability as the positive score,
    one-vs-rest. Image counts are totals over all folds.
    """
    if len(samples) != len(folds):
        raise ValueError("samples and fold assignment differ in length")
    if not samples:
        raise EmptyFold("no samples given")
    labels = tuple(labels)
    fold_ids = sorted(set(folds))
    if fold_count is not None:
        missing = [f for f in range(fold_count) if f not in set(folds)]
        if missing:
            raise EmptyFold(f"folds {missing} have no samples")
        fold_ids = sorted(set(folds) | set(range(fold_count)))
    per_class: dict[str, dict[str, list[MetricValue]]] = {
        lab: {"precision": [], "recall": [], "f1": [], "ap": []} for lab in labels
    }
    counts = {lab: 0 for lab in labels}
    for f in fold_ids:
        idx = [i for i, ff in enumerate(folds) if ff == f]
        if not idx:
            raise EmptyFold(f"fold {f} has no samples")
        truths = [samples[i][1] for i in idx]
        preds = [samples[i][0].argmax_label for i in idx]
        cm = confusion(truths, preds, labels)
        for lab in labels:
            per_class[lab]["precision"].append(precision(cm, lab))
            per_class[lab]["recall"].append(recall(cm, lab))
            per_class[lab]["f1"].append(f1(cm, lab))
            scores = [samples[i][0].probabilities[labels.index(lab)] for i in idx]
            binary = [1 if t == lab else 0 for t in truths]
            try:
                ap = MetricValue(average_precision(pr_curve(scores, binary)))
            except NoPositives:
                ap = MetricValue(0.0, undefined=True)
            per_class[lab]["ap"].append(ap)
    for _, truth in samples:
        if truth not in labels:
            raise UnknownLabel(f"true label {truth!r} not in {labels}")
        counts[truth] += 1

    class_rows = [
        ReportRow(
            name=lab,
            image_count=counts[lab],
            precision=_mean(per_class[lab]["precision"]),
            recall=_mean(per_class[lab]["recall"]),
            f1=_mean(per_class[lab]["f1"]),
            ap=_mean(per_class[lab]["ap"]),
        )
        for lab in labels
    ]
    average = ReportRow(
        name="Model Average",
        image_count=len(samples),
        precision=_mean([r.precision for r in class_rows]),
        recall=_mean([r.recall for r in class_rows]),
        f1=_mean([r.f1 for r in class_rows]),
        ap=_mean([r.ap for r in class_rows]),
    )
    return EvalReport(rows=[average] + class_rows, fold_count=len(fold_ids), labels=labels)


def render_text(report: EvalReport) -> str:
    """Aligned table at 3 decimal places."""
    header = ["Class", "Image count", "Precision", "Recall", "F1 Score", "AP"]
    body = [
        [
            row.name,
            f"{row.image_count:,}",
            row.precision.render(),
            row.recall.render(),
            row.f1.render(),
            row.ap.render(),
        ]
        for row in report.rows
    ]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    lines.append("")
    lines.append(f"Folds: {report.fold_count}; model average is the unweighted "
                 "macro mean over classes.")
    if any(m.undefined for row in report.rows
           for m in (row.precision, row.recall, row.f1, row.ap)):
        lines.append("* zero denominator in at least one fold; counted as 0.")
    return "\n".join(lines)


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class", "image_count", "precision", "recall", "f1", "ap", "undefined"])
    for row in report.rows:
        undef = ";".join(
            name
            for name, m in (("precision", row.precision), ("recall", row.recall),
                            ("f1", row.f1), ("ap", row.ap))
            if m.undefined
        )
        writer.writerow([
            row.name, row.image_count, f"{row.precision.value:.6f}",
            f"{row.recall.value:.6f}", f"{row.f1.value:.6f}", f"{row.ap.value:.6f}",
            undef,
        ])
    return buf.getvalue()


def pr_curves_csv(samples: Sequence[tuple[Prediction, str]],
                  labels: Sequence[str] = CLASS_LABELS) -> str:
    """Pooled (all folds together) per-class PR curves for external plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class", "threshold_rank", "recall", "precision"])
    labels = tuple(labels)
    for lab in labels:
        col = labels.index(lab)
        scores = [p.probabilities[col] for p, _ in samples]
        binary = [1 if t == lab else 0 for _, t in samples]
        try:
            curve = pr_curve(scores, binary)
        except NoPositives:
            continue
        for rank, (r, p) in enumerate(curve.points, start=1):
            writer.writerow([lab, rank, f"{r:.9f}", f"{p:.9f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Prediction CSV interchange
# ---------------------------------------------------------------------------

PREDICTIONS_HEADER = ["id", "true_label", "p_covid", "p_noncovid", "p_nofinding", "fold"]


def load_predictions_csv(text: str) -> tuple[list[tuple[Prediction, str]], list[int]]:
    """Rows of id,true_label,p_covid,p_noncovid,p_nofinding,fold.

    Probabilities are taken as given (no renormalization); the argmax label
    uses the lowest-index tie rule.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != PREDICTIONS_HEADER:
        raise ValueError(
            f"predictions CSV header must be {','.join(PREDICTIONS_HEADER)}"
        )
    samples: list[tuple[Prediction, str]] = []
    folds: list[int] = []
    for line_no, row in enumerate(reader, start=2):
        probs = (float(row["p_covid"]), float(row["p_noncovid"]), float(row["p_nofinding"]))
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise ValueError(f"line {line_no}: probabilities outside [0, 1]")
        pred = Prediction(
            class_labels=CLASS_LABELS,
            probabilities=probs,
            argmax_label=CLASS_LABELS[int(np.argmax(probs))],
            model_version="csv-import",
        )
        samples.append((pred, row["true_label"]))
        folds.append(int(row["fold"]))
    return samples, folds


def dump_predictions_csv(samples: Sequence[tuple[Prediction, str]],
                         folds: Sequence[int]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(PREDICTIONS_HEADER)
    for i, ((pred, truth), fold) in enumerate(zip(samples, folds)):
        writer.writerow([
            i, truth,
            repr(pred.probabilities[0]), repr(pred.probabilities[1]),
            repr(pred.probabilities[2]), fold,
        ])
    return buf.getvalue()
