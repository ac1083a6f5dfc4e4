#!/usr/bin/env python3
"""Generate the 30-sample / 3-fold evaluation fixture.

Deliberately independent of the cxrtriage package: plain loops, no numpy,
its own precision/recall/F1/AP arithmetic. The test suite compares the
library's report against the JSON this writes.

Usage: python3 tools/make_metrics_fixture.py [testdata/metrics]
"""

import csv
import json
import random
import sys
from pathlib import Path

LABELS = ["COVID-19", "Non-COVID-19", "No Finding"]
N_SAMPLES = 30
N_FOLDS = 3


def make_samples():
    rng = random.Random(123)
    samples = []
    for i in range(N_SAMPLES):
        truth = LABELS[i % 3]
        raw = [rng.random() for _ in range(3)]
        # Bias toward the truth two times out of three so the report is
        # neither perfect nor random.
        if rng.random() < 2 / 3:
            raw[LABELS.index(truth)] += 1.0
        total = sum(raw)
        probs = [v / total for v in raw]
        samples.append({"id": i, "truth": truth, "probs": probs, "fold": i % N_FOLDS})
    return samples


def argmax_label(probs):
    best = 0
    for j in range(1, 3):
        if probs[j] > probs[best]:
            best = j
    return LABELS[best]


def ratio(num, den):
    if den == 0:
        return {"value": 0.0, "undefined": True}
    return {"value": num / den, "undefined": False}


def ap_by_threshold_enumeration(scores, truths):
    """Sweep every distinct score as a threshold, descending."""
    positives = sum(truths)
    if positives == 0:
        return {"value": 0.0, "undefined": True}
    thresholds = sorted(set(scores), reverse=True)
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        tp = sum(1 for s, y in zip(scores, truths) if s >= t and y == 1)
        pp = sum(1 for s in scores if s >= t)
        precision = tp / pp
        recall = tp / positives
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return {"value": ap, "undefined": False}


def fold_metrics(fold_samples):
    per_class = {}
    for ci, label in enumerate(LABELS):
        tp = fp = fn = 0
        for s in fold_samples:
            predicted = argmax_label(s["probs"])
            if s["truth"] == label and predicted == label:
                tp += 1
            elif s["truth"] != label and predicted == label:
                fp += 1
            elif s["truth"] == label and predicted != label:
                fn += 1
        scores = [s["probs"][ci] for s in fold_samples]
        truths = [1 if s["truth"] == label else 0 for s in fold_samples]
        per_class[label] = {
            "precision": ratio(tp, tp + fp),
            "recall": ratio(tp, tp + fn),
            "f1": ratio(2 * tp, 2 * tp + fp + fn),
            "ap": ap_by_threshold_enumeration(scores, truths),
        }
    return per_class


def mean(cells):
    return {
        "value": sum(c["value"] for c in cells) / len(cells),
        "undefined": any(c["undefined"] for c in cells),
    }


def main(out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = make_samples()

    with open(out_dir / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "true_label", "p_covid", "p_noncovid", "p_nofinding", "fold"])
        for s in samples:
            writer.writerow([s["id"], s["truth"], repr(s["probs"][0]),
                             repr(s["probs"][1]), repr(s["probs"][2]), s["fold"]])

    by_fold = {f: [s for s in samples if s["fold"] == f] for f in range(N_FOLDS)}
    fold_results = {f: fold_metrics(by_fold[f]) for f in range(N_FOLDS)}

    class_rows = []
    for label in LABELS:
        row = {"name": label,
               "image_count": sum(1 for s in samples if s["truth"] == label)}
        for metric in ("precision", "recall", "f1", "ap"):
            row[metric] = mean([fold_results[f][label][metric] for f in range(N_FOLDS)])
        class_rows.append(row)
    average = {"name": "Model Average", "image_count": len(samples)}
    for metric in ("precision", "recall", "f1", "ap"):
        average[metric] = mean([row[metric] for row in class_rows])

    report = {"fold_count": N_FOLDS, "rows": [average] + class_rows}
    with open(out_dir / "expected_report.json", "w") as fh:
        json.dump(report, fh, indent=1)
    print(f"wrote {out_dir}/predictions.csv and expected_report.json "
          f"({len(samples)} samples, {N_FOLDS} folds)")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "testdata/metrics")
