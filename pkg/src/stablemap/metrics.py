"""Evaluation metrics: ROC/AUC, geometric-mean thresholding, mIoU, reports.

The positive class throughout is "dynamic" (class 1).  A point is
classified dynamic when its score is at or above the threshold.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .labelling import label_to_distance
from .validation import as_binary_classes, check_same_length

__all__ = [
    "RocCurve",
    "EvaluationReport",
    "roc_curve",
    "auc",
    "optimal_threshold_gmean",
    "miou",
    "evaluate_map",
]


@dataclass
class RocCurve:
    """ROC sweep over all distinct score thresholds, descending.

    The first entry is a sentinel threshold above every score, pinning the
    curve at (FPR 0, TPR 0); the last threshold equals the minimum score,
    giving (1, 1).
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray


@dataclass
class EvaluationReport:
    """Summary metrics for one scored map against binary ground truth."""

    auc: float
    optimal_threshold: float
    optimal_threshold_meters: float
    gmean: float
    miou: float
    iou_stable: float
    iou_dynamic: float
    rmse: float | None = None
    n_points: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def roc_curve(scores, truth) -> RocCurve:
    """ROC curve of continuous scores against binary ground truth.

    Sweeps every distinct score value as a threshold (plus a sentinel
    above the maximum), classifying a point dynamic iff score >= threshold.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    truth = as_binary_classes(truth, "truth")
    check_same_length(scores, truth, "scores", "truth")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("degenerate ROC: ground truth contains a single class")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_truth = truth[order]
    tp = np.cumsum(sorted_truth)
    fp = np.cumsum(1 - sorted_truth)
    # last occurrence of each distinct score = counts with threshold at it
    distinct = np.flatnonzero(np.diff(sorted_scores, append=-np.inf))
    thresholds = np.concatenate([[np.inf], sorted_scores[distinct]])
    tpr = np.concatenate([[0.0], tp[distinct] / n_pos])
    fpr = np.concatenate([[0.0], fp[distinct] / n_neg])
    return RocCurve(thresholds=thresholds, tpr=tpr, fpr=fpr)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the ROC curve."""
    return float(np.trapezoid(curve.tpr, curve.fpr))


def optimal_threshold_gmean(curve: RocCurve) -> tuple[float, float]:
    """Threshold maximizing sqrt(TPR * (1 - FPR)); ties take the smallest.

    The geometric mean balances sensitivity against specificity, which
    suits the heavily imbalanced stable/dynamic split.
    """
    gm = np.sqrt(curve.tpr * (1.0 - curve.fpr))
    best = gm.max()
    candidates = curve.thresholds[gm == best]
    return float(candidates.min()), float(best)


def miou(pred_binary, truth) -> tuple[float, tuple[float, float]]:
    """Mean intersection-over-union over the stable and dynamic classes.

    A class absent from both prediction and truth contributes a vacuous
    IoU of 1.
    """
    pred = as_binary_classes(pred_binary, "pred_binary")
    truth = as_binary_classes(truth, "truth")
    check_same_length(pred, truth, "pred_binary", "truth")
    ious = []
    for c in (0, 1):
        p = pred == c
        g = truth == c
        union = int(np.sum(p | g))
        if union == 0:
            ious.append(1.0)
        else:
            ious.append(float(np.sum(p & g)) / union)
    return float(np.mean(ious)), (ious[0], ious[1])


def evaluate_map(
    scores,
    ground_truth,
    lam: float = 0.5,
    threshold: float | None = None,
    reference_labels=None,
) -> EvaluationReport:
    """Full evaluation of per-point scores against binary ground truth.

    Computes the ROC AUC of the scores, picks (or applies) a threshold,
    and reports mIoU of the thresholded classes.  When
    ``reference_labels`` is given (e.g. auto-labels for evaluating model
    predictions), the RMSE between scores and those labels is included.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    curve = roc_curve(scores, ground_truth)
    area = auc(curve)
    if threshold is None:
        threshold, gmean = optimal_threshold_gmean(curve)
    else:
        truth = as_binary_classes(ground_truth)
        pred = (scores >= threshold).astype(np.int64)
        tp = np.sum((pred == 1) & (truth == 1))
        fp = np.sum((pred == 1) & (truth == 0))
        tpr = tp / max(int(truth.sum()), 1)
        fpr = fp / max(int((1 - truth).sum()), 1)
        gmean = float(np.sqrt(tpr * (1.0 - fpr)))
    pred = (scores >= threshold).astype(np.int64)
    mean_iou, (iou_s, iou_d) = miou(pred, ground_truth)

    err = None
    if reference_labels is not None:
        from .weighting import rmse

        err = rmse(scores, reference_labels)

    return EvaluationReport(
        auc=area,
        optimal_threshold=float(threshold),
        optimal_threshold_meters=float(label_to_distance(min(threshold, 1.0 - 1e-15), lam)),
        gmean=float(gmean),
        miou=mean_iou,
        iou_stable=iou_s,
        iou_dynamic=iou_d,
        rmse=err,
        n_points=int(scores.size),
    )
