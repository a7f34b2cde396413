"""Evaluation against hidden ground truth: augmentation precision, teacher coverage, accuracy.

This is the only module that reads ``PartitionedDataset.true_labels``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PrecisionRow:
    class_id: object          # int, or "overall"
    selected_size: int
    precision: float | None   # None when nothing was selected


@dataclass(frozen=True)
class ThresholdRow:
    eta: float
    accuracy: float | None
    covered_size: int


def augmentation_report(aug, pd) -> list[PrecisionRow]:
    idx, lab, _, _ = aug.assigned()
    correct = pd.true_labels[idx] == lab
    rows = []
    for c in range(aug.num_classes):
        hit = correct[lab == c]
        rows.append(PrecisionRow(c, int(hit.size), float(hit.mean()) if hit.size else None))
    rows.append(PrecisionRow("overall", int(idx.size), float(correct.mean()) if idx.size else None))
    return rows


def threshold_sweep(predict, features, true_labels, etas) -> list[ThresholdRow]:
    """Accuracy of ``argmax`` on the subset whose top probability reaches each eta.

    ``predict`` is either a callable returning ``(n, C)`` probabilities or an
    object with a ``predict`` method (e.g. a teacher ensemble).
    """
    fn = predict.predict if hasattr(predict, "predict") else predict
    probs = fn(np.asarray(features, dtype=np.float64))
    top = probs.max(axis=1)
    hit = probs.argmax(axis=1) == np.asarray(true_labels)
    rows = []
    for eta in etas:
        covered = top >= eta
        k = int(covered.sum())
        rows.append(ThresholdRow(float(eta), float(hit[covered].mean()) if k else None, k))
    return rows


def test_accuracy(clf, features, true_labels) -> float:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        raise ValueError("evaluation set is empty")
    pred = clf.predict_proba(features).argmax(axis=1)
    return float((pred == np.asarray(true_labels)).mean())


# Keep pytest from collecting the metric as a test when imported into test modules.
test_accuracy.__test__ = False


def _fmt(v):
    return "" if v is None else repr(v)


def write_precision_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_id", "size", "precision"])
        for r in rows:
            w.writerow([r.class_id, r.selected_size, _fmt(r.precision)])


def write_threshold_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "accuracy", "size"])
        for r in rows:
            w.writerow([repr(r.eta), _fmt(r.accuracy), r.covered_size])
