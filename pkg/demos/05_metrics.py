"""
Evaluation metrics: confusion counts to fold-averaged report
============================================================

Accuracy, precision, recall, and F1 come straight from one-vs-rest
confusion counts; average precision is the rank-weighted sum over the
precision-recall curve. The report mirrors a cross-validated results
table: per-class rows plus an unweighted model-average row.
"""

import numpy as np

from cxrtriage import metrics
from cxrtriage.metrics import CLASS_LABELS
from cxrtriage.nn import Prediction

C, N, F = CLASS_LABELS

# Confusion-derived metrics on a tiny hand-checkable example.
cm = metrics.confusion([C, C, N, F], [C, N, N, F])
print("counts (true x predicted):")
print(cm.counts)
print(f"accuracy  {metrics.accuracy(cm).value:.3f}")
for label in CLASS_LABELS:
    print(f"{label:<13} P={metrics.precision(cm, label).value:.3f} "
          f"R={metrics.recall(cm, label).value:.3f} "
          f"F1={metrics.f1(cm, label).value:.3f}")

# The harmonic-mean identity on published-style numbers.
print(f"\nF1(0.981, 0.962) = {metrics.f1_score(0.981, 0.962):.3f}")
print(f"F1(0.941, 0.967) = {metrics.f1_score(0.941, 0.967):.3f}")

# A PR curve, point by point, and its average precision.
curve = metrics.pr_curve([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 1])
print("\nPR points (recall, precision):")
for r, p in curve.points:
    print(f"  ({r:.3f}, {p:.3f})")
print(f"baseline (prevalence) = {curve.baseline:.3f}")
print(f"AP = {metrics.average_precision(curve):.4f}  (29/36 = {29 / 36:.4f})")

# A fold-averaged report over synthetic predictions.
rng = np.random.default_rng(1)
samples, folds = [], []
for i in range(60):
    truth = CLASS_LABELS[i % 3]
    probs = rng.dirichlet(np.ones(3))
    if rng.random() < 0.75:  # a mostly-correct model
        probs = 0.25 * probs
        probs[i % 3] += 0.75
    pred = Prediction(CLASS_LABELS, tuple(probs),
                      CLASS_LABELS[int(np.argmax(probs))], "demo/1")
    samples.append((pred, truth))
    folds.append(i % 5)

report = metrics.evaluate(samples, folds)
print("\n" + metrics.render_text(report))
