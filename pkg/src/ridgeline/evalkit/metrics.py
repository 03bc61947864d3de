"""Verification metrics: confusion counts, per-subset accuracy and F1,
ROC/AUC, equal error rate, and threshold selection.

Scores are "genuine-ness": a pair is predicted genuine iff score >= threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DataError

SCORE_MODES = ("classifier_prob", "cosine")


@dataclass
class ScoreSet:
    """Parallel score/label arrays; label 1 = genuine, 0 = imposter."""

    scores: np.ndarray
    labels: np.ndarray
    mode: str

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.ndim != 1 or self.scores.shape != self.labels.shape:
            raise ContractError(
                f"scores and labels must be equal-length 1-D arrays, got "
                f"{self.scores.shape} and {self.labels.shape}"
            )
        if not np.isin(self.labels, (0, 1)).all():
            raise ContractError("labels must be 0 (imposter) or 1 (genuine)")
        if self.mode not in SCORE_MODES:
            raise ContractError(f"mode must be one of {SCORE_MODES}, got {self.mode!r}")
        if len(self.scores):
            lo, hi = self.scores.min(), self.scores.max()
            # tiny float slack: normalized dot products can land at 1+2eps
            if self.mode == "cosine" and (lo < -1 - 1e-9 or hi > 1 + 1e-9):
                raise ContractError(f"cosine scores outside [-1,1]: [{lo}, {hi}]")
            if self.mode == "classifier_prob" and (lo < -1e-9 or hi > 1 + 1e-9):
                raise ContractError(f"probabilities outside [0,1]: [{lo}, {hi}]")

    def __len__(self) -> int:
        return len(self.scores)

    def require_both_classes(self) -> None:
        if len(self) == 0:
            raise DataError("empty score set")
        if self.labels.min() == self.labels.max():
            raise DataError("score set contains a single class")


def confusion_at(scores: ScoreSet, threshold: float) -> dict[str, int]:
    """TP/FP/TN/FN with genuine predicted at score >= threshold."""
    pred = scores.scores >= threshold
    pos = scores.labels == 1
    return {
        "TP": int(np.sum(pred & pos)),
        "FP": int(np.sum(pred & ~pos)),
        "TN": int(np.sum(~pred & ~pos)),
        "FN": int(np.sum(~pred & pos)),
    }


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _f1(precision: float, recall: float) -> float:
    return _safe_div(2 * precision * recall, precision + recall)


@dataclass
class MetricsReport:
    mode: str
    threshold: float
    counts: dict[str, int]
    accuracy: dict[str, float]
    f1: dict[str, float]
    precision: float
    recall: float
    auc: float
    eer: float
    roc: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        """JSON-ready dict; the ROC polyline is emitted separately as CSV."""
        return {
            "mode": self.mode,
            "threshold": self.threshold,
            "counts": dict(self.counts),
            "accuracy": dict(self.accuracy),
            "f1": dict(self.f1),
            "precision": self.precision,
            "recall": self.recall,
            "auc": self.auc,
            "eer": self.eer,
        }


def roc_curve(scores: ScoreSet) -> tuple[np.ndarray, float]:
    """ROC points (fpr, tpr, threshold) at every distinct score, ties grouped
    into single steps, preceded by the (0, 0, +inf) origin.  AUC by the
    trapezoid rule, which credits ties with half."""
    scores.require_both_classes()
    order = np.argsort(-scores.scores, kind="stable")
    s = scores.scores[order]
    y = scores.labels[order]
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos

    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of each run of equal scores = the grouped threshold step
    boundary = np.nonzero(np.diff(s))[0]
    idx = np.concatenate([boundary, [len(s) - 1]])

    fpr = np.concatenate([[0.0], fp[idx] / n_neg])
    tpr = np.concatenate([[0.0], tp[idx] / n_pos])
    thresholds = np.concatenate([[np.inf], s[idx]])
    points = np.column_stack([fpr, tpr, thresholds])
    auc = float(np.trapezoid(tpr, fpr))
    return points, auc


def eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    FAR(t) = fraction of imposters scoring >= t, FRR(t) = fraction of
    genuines scoring < t.  The crossing is found on the piecewise-linear
    interpolation between candidate thresholds (all distinct scores plus
    sentinels below the minimum and above the maximum).
    """
    scores.require_both_classes()
    gen = np.sort(scores.scores[scores.labels == 1])
    imp = np.sort(scores.scores[scores.labels == 0])

    distinct = np.unique(scores.scores)
    candidates = np.concatenate([[distinct[0] - 1.0], distinct, [distinct[-1] + 1.0]])
    far = np.array([np.mean(imp >= t) for t in candidates])
    frr = np.array([np.mean(gen < t) for t in candidates])
    diff = far - frr  # starts at +1, ends at -1, non-increasing in t

    k = int(np.argmax(diff <= 0))
    if diff[k] == 0:
        return float(far[k]), float(candidates[k])
    # interpolate inside (k-1, k); diff[k-1] > 0 >= diff[k] guaranteed
    alpha = diff[k - 1] / (diff[k - 1] - diff[k])
    rate = far[k - 1] + alpha * (far[k] - far[k - 1])
    threshold = candidates[k - 1] + alpha * (candidates[k] - candidates[k - 1])
    return float(rate), float(threshold)


def select_threshold(scores: ScoreSet, criterion: str = "max_accuracy") -> float:
    """Pick an operating threshold on validation scores.

    max_accuracy sweeps midpoints of adjacent distinct scores (plus sentinels
    one unit past each extreme) and breaks ties toward the higher threshold.
    """
    if len(scores) == 0:
        raise DataError("empty score set")
    if criterion == "eer":
        return eer(scores)[1]
    if criterion != "max_accuracy":
        raise DataError(f"unknown criterion {criterion!r}")
    distinct = np.unique(scores.scores)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    candidates = np.concatenate([[distinct[0] - 1.0], mids, [distinct[-1] + 1.0]])
    best_t = candidates[0]
    best_acc = -1.0
    for t in candidates:  # ascending, so >= keeps the highest tied threshold
        c = confusion_at(scores, t)
        acc = (c["TP"] + c["TN"]) / len(scores)
        if acc >= best_acc:
            best_acc = acc
            best_t = t
    return float(best_t)


def report(scores: ScoreSet, threshold: float) -> MetricsReport:
    """Full verification report at one operating threshold.

    Genuine-subset accuracy is recall (TPR) and imposter-subset accuracy is
    specificity (TNR) by construction; both equalities are re-asserted here
    because downstream tables quote the three columns independently.
    """
    scores.require_both_classes()
    c = confusion_at(scores, threshold)
    total = len(scores)
    tp, fp, tn, fn = c["TP"], c["FP"], c["TN"], c["FN"]

    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    entire_acc = (tp + tn) / total

    # computed over the raw subsets, independently of the confusion counts,
    # so the identity checks below actually compare two code paths
    genuine_acc = float(np.mean(scores.scores[scores.labels == 1] >= threshold))
    imposter_acc = float(np.mean(scores.scores[scores.labels == 0] < threshold))

    if genuine_acc != recall:
        raise ContractError("genuine-subset accuracy must equal recall")
    if imposter_acc != _safe_div(tn, tn + fp):
        raise ContractError("imposter-subset accuracy must equal specificity")

    f1_genuine = _f1(precision, recall)
    imp_precision = _safe_div(tn, tn + fn)
    imp_recall = imposter_acc
    f1_imposter = _f1(imp_precision, imp_recall)

    points, auc = roc_curve(scores)
    eer_rate, _ = eer(scores)

    return MetricsReport(
        mode=scores.mode,
        threshold=float(threshold),
        counts=c,
        accuracy={"imposter": imposter_acc, "genuine": genuine_acc, "entire": entire_acc},
        f1={
            "imposter": f1_imposter,
            "genuine": f1_genuine,
            # the aggregate column tracks the positive class; macro averages both
            "entire": f1_genuine,
            "macro": (f1_genuine + f1_imposter) / 2.0,
        },
        precision=precision,
        recall=recall,
        auc=auc,
        eer=eer_rate,
        roc=points,
    )
