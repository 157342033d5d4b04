"""Binary (precision/recall/MaxF) and multi-class (ORR/ARR) metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEvalError, DimensionError, WeightError

UNLABELED = 255


@dataclass
class BinaryEval:
    scores: np.ndarray
    truths: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.truths = np.asarray(self.truths, dtype=bool).reshape(-1)
        if self.weights is None:
            self.weights = np.ones_like(self.scores)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not (len(self.scores) == len(self.truths) == len(self.weights)):
            raise DimensionError("scores, truths and weights must have equal length")
        if np.any(self.weights < 0):
            raise WeightError("evaluation weights must be >= 0")


def pr_curve(ev: BinaryEval):
    """Precision/recall/F at every candidate threshold, ascending.

    A pixel is predicted positive when ``score >= t``. Candidates are the
    distinct scores plus 0 and a sentinel just above the largest of 1 and the
    top score (nothing predicted positive). Returns arrays
    ``(thresholds, precision, recall, f)``.
    """
    pos_mass = float(np.sum(ev.weights[ev.truths]))
    neg_mass = float(np.sum(ev.weights[~ev.truths]))
    if pos_mass <= 0 or neg_mass <= 0:
        raise DegenerateEvalError("MaxF needs at least one positive and one negative example")

    order = np.argsort(-ev.scores, kind="stable")
    s = ev.scores[order]
    wp = np.where(ev.truths[order], ev.weights[order], 0.0)
    wn = np.where(ev.truths[order], 0.0, ev.weights[order])
    tp_c, fp_c = np.cumsum(wp), np.cumsum(wn)
    # last index of each run of equal scores: everything up to it is >= that score
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    thr = s[last]
    tp, fp = tp_c[last], fp_c[last]

    top = max(1.0, float(s[0]))
    sentinel = np.nextafter(top, np.inf)
    all_tp, all_fp = tp_c[-1], fp_c[-1]
    extra_t, extra_tp, extra_fp = [sentinel], [0.0], [0.0]
    if thr[-1] > 0.0:
        extra_t.append(0.0)
        extra_tp.append(all_tp)
        extra_fp.append(all_fp)
    thr = np.concatenate([thr, extra_t])
    tp = np.concatenate([tp, extra_tp])
    fp = np.concatenate([fp, extra_fp])

    fn = pos_mass - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = tp / pos_mass
        f = np.where(tp > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    asc = np.argsort(thr, kind="stable")
    return thr[asc], precision[asc], recall[asc], f[asc]


def max_f(ev: BinaryEval):
    """Return ``(maxF, threshold, precision, recall)``; ties go to the smallest threshold."""
    thr, p, r, f = pr_curve(ev)
    i = int(np.argmax(f))
    return float(f[i]), float(thr[i]), float(p[i]), float(r[i])


def write_pr_curve(path, ev: BinaryEval) -> None:
    thr, p, r, f = pr_curve(ev)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall", "f1"])
        for row in zip(thr, p, r, f):
            w.writerow([repr(float(v)) for v in row])


def confusion_matrix(truth, pred, num_classes: int) -> np.ndarray:
    """K x K counts with rows = truth, columns = prediction; UNLABELED truth is skipped."""
    truth = np.asarray(truth).reshape(-1).astype(np.int64)
    pred = np.asarray(pred).reshape(-1).astype(np.int64)
    if truth.shape != pred.shape:
        raise DimensionError(f"truth has {truth.size} pixels, prediction {pred.size}")
    keep = truth != UNLABELED
    truth, pred = truth[keep], pred[keep]
    if np.any(truth >= num_classes) or np.any(pred >= num_classes) or np.any(pred < 0) or np.any(truth < 0):
        raise DimensionError(f"class ids outside [0, {num_classes})")
    return np.bincount(truth * num_classes + pred, minlength=num_classes ** 2).reshape(num_classes, num_classes)


def orr_arr(cm) -> tuple[float, float]:
    """Overall recognition rate and mean per-class accuracy.

    Classes without support are left out of the mean.
    """
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise DegenerateEvalError("empty confusion matrix")
    support = cm.sum(axis=1)
    present = support > 0
    orr = float(np.trace(cm) / total)
    arr = float(np.mean(np.diag(cm)[present] / support[present]))
    return orr, arr


def evaluate_labelmap(pred, truth, weights=None, num_classes: int | None = None) -> dict:
    """Metrics for one image (or a stack of images).

    ``pred`` is either an integer label map (H x W) or a probability map
    (K x H x W). With K == 2 (or ``num_classes == 2``) the binary family is
    computed from the positive channel; otherwise the confusion matrix
    family. ``weights`` (H x W) weights the binary counts.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.ndim == truth.ndim + 1:
        probs = pred
        k = probs.shape[0]
        labels = probs.argmax(axis=0)
    else:
        probs = None
        labels = pred.astype(np.int64)
        k = num_classes
    k = num_classes or k
    if k is None:
        raise ValueError("num_classes is required for label-map predictions")
    if labels.shape != truth.shape:
        raise DimensionError(f"prediction {labels.shape} vs truth {truth.shape}")

    keep = truth != UNLABELED
    if k == 2:
        scores = probs[1][keep] if probs is not None else (labels[keep] == 1).astype(np.float64)
        w = None if weights is None else np.asarray(weights)[keep]
        ev = BinaryEval(scores, truth[keep] == 1, w)
        f, t, p, r = max_f(ev)
        return {"maxF": f, "threshold": t, "precision": p, "recall": r, "eval": ev}
    cm = confusion_matrix(truth, labels, k)
    orr, arr = orr_arr(cm)
    return {"orr": orr, "arr": arr, "confusion": cm.tolist()}
