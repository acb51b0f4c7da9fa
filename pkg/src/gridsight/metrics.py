"""Confusion-matrix metrics over semantic grids.

Rows of the confusion matrix are ground-truth classes, columns predictions.
Class means skip classes absent from the truth; set metrics average the
per-sample values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grid import NUM_CLASSES, GridMap


class EmptyConfusionError(ValueError):
    """Metrics requested on a matrix with no evaluated cells."""


def confusion(pred: GridMap, truth: GridMap, mask=None) -> np.ndarray:
    if pred.spec != truth.spec:
        raise ValueError(f"grid specs differ: {pred.spec} vs {truth.spec}")
    if mask is None:
        mask = truth.eval_mask & pred.eval_mask
    t = truth.classes[mask].astype(np.int64)
    p = pred.classes[mask].astype(np.int64)
    return np.bincount(t * NUM_CLASSES + p, minlength=NUM_CLASSES**2).reshape(NUM_CLASSES, NUM_CLASSES)


def per_class(cm) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(recall, IoU, present) per class; entries for absent classes are NaN."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    gt = cm.sum(axis=1)
    pr = cm.sum(axis=0)
    present = gt > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        recall = np.where(present, tp / gt, np.nan)
        iou = np.where(present, tp / (gt + pr - tp), np.nan)
    return recall, iou, present


def mean_accuracy(cm) -> float:
    recall, _, present = per_class(cm)
    if not present.any():
        raise EmptyConfusionError("confusion matrix is empty")
    return float(recall[present].mean())


def mean_iou(cm) -> float:
    _, iou, present = per_class(cm)
    if not present.any():
        raise EmptyConfusionError("confusion matrix is empty")
    return float(iou[present].mean())


@dataclass
class SetScore:
    mean_accuracy: float
    mean_iou: float
    n_scored: int
    skipped: list[int]


def evaluate_set(pairs) -> SetScore:
    """Average per-sample mean accuracy and mean IoU over (pred, truth) pairs.

    Samples with no evaluable cells are skipped and their indices reported.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no samples to evaluate")
    accs, ious, skipped = [], [], []
    for idx, (pred, truth) in enumerate(pairs):
        cm = confusion(pred, truth)
        if cm.sum() == 0:
            skipped.append(idx)
            continue
        accs.append(mean_accuracy(cm))
        ious.append(mean_iou(cm))
    if not accs:
        raise EmptyConfusionError("no sample has evaluable cells")
    return SetScore(float(np.mean(accs)), float(np.mean(ious)), len(accs), skipped)


SWEEP_FIELDS = ["method", "perturbation", "mean_accuracy", "mean_iou", "acc_downgrade", "iou_downgrade"]


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SWEEP_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(row[k])) if k not in ("method", "perturbation") else row[k])
                        for k in SWEEP_FIELDS})


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != SWEEP_FIELDS:
            raise ValueError(f"unexpected sweep columns {reader.fieldnames}")
        return [
            {k: (v if k in ("method", "perturbation") else float(v)) for k, v in row.items()}
            for row in reader
        ]
