"""ROC-based evaluation: EER and AUC, both reported as percentages.

Score polarity: higher means more likely fake (label 1). A sample whose
score equals the threshold counts as a "fake" decision.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import SingleClass


@dataclass(frozen=True)
class EvalReport:
    eer_percent: float
    auc_percent: float
    eer_threshold: float
    n_bonafide: int
    n_fake: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _as_scored_set(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be equal-length non-empty vectors")
    n_fake = int((labels == 1).sum())
    n_bona = int((labels == 0).sum())
    if n_fake + n_bona != labels.size:
        raise ValueError("labels must be 0 (bonafide) or 1 (fake)")
    if n_fake == 0 or n_bona == 0:
        raise SingleClass(f"need both classes: {n_bona} bonafide, {n_fake} fake")
    return scores, labels.astype(np.int64), n_bona, n_fake


def roc_curve(scores, labels):
    """Sweep thresholds over the distinct scores, descending.

    Returns (fpr, tpr, thresholds) arrays including the (0, 0) start point
    (threshold +inf). The final point is always (1, 1). FPR/TPR are monotone
    non-decreasing.
    """
    scores, labels, n_bona, n_fake = _as_scored_set(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    # last index of each run of equal scores
    boundary = np.nonzero(np.diff(s))[0]
    last = np.concatenate([boundary, [s.size - 1]])
    tp = np.cumsum(y)[last]
    fp = np.cumsum(1 - y)[last]
    fpr = np.concatenate([[0.0], fp / n_bona])
    tpr = np.concatenate([[0.0], tp / n_fake])
    thresholds = np.concatenate([[np.inf], s[last]])
    return fpr, tpr, thresholds


def auc(scores, labels) -> float:
    """Trapezoidal area under the ROC, as a percentage. Equals the
    Mann-Whitney statistic 100 * (P(fake > bonafide) + P(tie) / 2)."""
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.trapezoid(tpr, fpr) * 100.0)


def eer(scores, labels) -> tuple[float, float]:
    """Equal error rate (percent) and its threshold.

    FAR(t) = fraction of bonafide scored >= t; FRR(t) = fraction of fake
    scored < t. The crossing is linearly interpolated between adjacent ROC
    points when it does not land on one.
    """
    fpr, tpr, thr = roc_curve(scores, labels)
    far = fpr
    frr = 1.0 - tpr
    diff = far - frr  # monotone non-decreasing from -1 to +1
    k = int(np.searchsorted(diff, 0.0, side="left"))
    if diff[k] == 0.0:
        return float(far[k] * 100.0), float(thr[k])
    lam = -diff[k - 1] / (diff[k] - diff[k - 1])
    rate = far[k - 1] + lam * (far[k] - far[k - 1])
    if np.isinf(thr[k - 1]):
        threshold = float(thr[k])  # crossing inside the leading segment
    else:
        threshold = float(thr[k - 1] + lam * (thr[k] - thr[k - 1]))
    return float(rate * 100.0), threshold


def evaluate_scores(scores, labels) -> EvalReport:
    scores_arr, labels_arr, n_bona, n_fake = _as_scored_set(scores, labels)
    eer_pct, threshold = eer(scores_arr, labels_arr)
    return EvalReport(
        eer_percent=eer_pct,
        auc_percent=auc(scores_arr, labels_arr),
        eer_threshold=threshold,
        n_bonafide=n_bona,
        n_fake=n_fake,
    )
