"""Task losses and the evaluation-metric suite.

Losses consume logits as autodiff tensors and return scalar tensors ready
for backward().  Metrics are plain numpy over finished predictions:
macro accuracy for scene classification, the AUPRC/F1 family for tagging,
and pairwise AUC / partial AUC over anomaly scores for machine
monitoring.  Everything here is small enough to verify against
brute-force oracles, and the test suite does exactly that.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np

from .errors import InputError
from .tensor import Tensor, log_softmax, softplus


# ---------------------------------------------------------------------------
# losses (differentiable)
# ---------------------------------------------------------------------------

def ce_loss(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean categorical cross-entropy from raw logits.

    Targets are rows on the probability simplex — one-hot or soft (as
    produced by mixing augmentations).
    """
    targets = np.asarray(targets, dtype=logits.dtype)
    if targets.shape != logits.shape:
        raise InputError(f"targets {targets.shape} do not match logits {logits.shape}")
    row_sums = targets.sum(axis=1)
    if np.abs(row_sums - 1.0).max() > 1e-6:
        raise InputError("each cross-entropy target row must sum to 1")
    per_sample = (log_softmax(logits) * Tensor(targets)).sum(axis=1)
    return -per_sample.mean()


def bce_loss(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean multi-label binary cross-entropy from raw logits.

    Uses the identity -[y log s(l) + (1-y) log(1-s(l))] = softplus(l) - l*y,
    which never evaluates log near 0.  Sums over classes, averages over
    the batch.
    """
    targets = np.asarray(targets, dtype=logits.dtype)
    if targets.shape != logits.shape:
        raise InputError(f"targets {targets.shape} do not match logits {logits.shape}")
    if targets.min() < 0.0 or targets.max() > 1.0:
        raise InputError("binary cross-entropy targets must lie in [0, 1]")
    t = Tensor(targets)
    per_sample = (softplus(logits) - logits * t).sum(axis=1)
    return per_sample.mean()


# ---------------------------------------------------------------------------
# plain-array activations (for finished predictions, no gradients)
# ---------------------------------------------------------------------------

def sigmoid_np(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function on a plain array."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax on a plain array along one axis."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# hard-decision statistics
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class ClassStats:
    """Per-class confusion counts from hard decisions."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    support: np.ndarray


def class_stats(scores: np.ndarray, truths: np.ndarray,
                multilabel: bool = False, threshold: float = 0.5) -> ClassStats:
    """Count TP/FP/FN per class.

    Multiclass decisions take the argmax of each score row; multilabel
    decisions threshold each score independently.
    """
    scores = np.asarray(scores)
    truths = np.asarray(truths)
    if scores.shape != truths.shape or scores.ndim != 2:
        raise InputError(f"need matching (M, N) matrices, got {scores.shape} vs {truths.shape}")
    if multilabel:
        pred = scores >= threshold
    else:
        pred = np.zeros_like(scores, dtype=bool)
        pred[np.arange(scores.shape[0]), scores.argmax(axis=1)] = True
    pos = truths > 0.5
    tp = (pred & pos).sum(axis=0)
    fp = (pred & ~pos).sum(axis=0)
    fn = (~pred & pos).sum(axis=0)
    return ClassStats(tp, fp, fn, pos.sum(axis=0))


def macro_acc(scores: np.ndarray, truths: np.ndarray) -> float:
    """Mean over classes of the within-class correct fraction."""
    stats = class_stats(scores, truths, multilabel=False)
    present = stats.support > 0
    if not present.any():
        raise InputError("no class has any true samples")
    return float((stats.tp[present] / stats.support[present]).mean())


def micro_f1(scores: np.ndarray, truths: np.ndarray, threshold: float = 0.5) -> float:
    """F1 over TP/FP/FN pooled across all classes."""
    stats = class_stats(scores, truths, multilabel=True, threshold=threshold)
    tp, fp, fn = stats.tp.sum(), stats.fp.sum(), stats.fn.sum()
    if 2 * tp + fp + fn == 0:
        return 0.0
    return float(2 * tp / (2 * tp + fp + fn))


# ---------------------------------------------------------------------------
# precision-recall
# ---------------------------------------------------------------------------

def pr_curve(scores: np.ndarray, truths: np.ndarray) -> np.ndarray:
    """Precision-recall points, one per distinct score threshold.

    Returns rows (recall, precision) ordered by increasing recall,
    prepended with a (0, first precision) anchor so integration starts at
    recall zero.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truths = np.asarray(truths).ravel()
    if scores.shape != truths.shape:
        raise InputError("scores and truths must align")
    npos = int((truths > 0.5).sum())
    if npos == 0:
        raise InputError("precision-recall needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_true = (truths[order] > 0.5).astype(np.int64)
    tp_cum = np.cumsum(sorted_true)
    count = np.arange(1, scores.size + 1)
    # last index of each run of equal scores = the point for that threshold
    s = scores[order]
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    recall = tp_cum[last] / npos
    precision = tp_cum[last] / count[last]
    pts = np.column_stack([recall, precision])
    return np.vstack([[0.0, pts[0, 1]], pts])


def auprc(scores: np.ndarray, truths: np.ndarray) -> float:
    """Area under the precision-recall curve by trapezoids over recall."""
    pts = pr_curve(scores, truths)
    return float(np.trapezoid(pts[:, 1], pts[:, 0]))


def macro_auprc(scores: np.ndarray, truths: np.ndarray) -> float:
    """Mean per-class AUPRC; classes without positives are skipped."""
    scores = np.asarray(scores)
    truths = np.asarray(truths)
    if scores.shape != truths.shape or scores.ndim != 2:
        raise InputError(f"need matching (M, N) matrices, got {scores.shape}")
    areas = []
    for c in range(scores.shape[1]):
        if (truths[:, c] > 0.5).sum() == 0:
            warnings.warn(f"class {c} has no positive samples; skipped in macro-AUPRC")
            continue
        areas.append(auprc(scores[:, c], truths[:, c]))
    if not areas:
        raise InputError("every class lacks positive samples")
    return float(np.mean(areas))


def micro_auprc(scores: np.ndarray, truths: np.ndarray) -> float:
    """AUPRC over all (instance, class) pairs pooled into one curve."""
    return auprc(np.asarray(scores).ravel(), np.asarray(truths).ravel())


# ---------------------------------------------------------------------------
# anomaly scoring and ranking metrics
# ---------------------------------------------------------------------------

PROB_CLAMP = 1e-7


def anomaly_score(window_probs: np.ndarray) -> float:
    """Mean log-odds of misclassification over a clip's context windows.

    window_probs holds the classifier's probability for the clip's own
    section, one value per window; probabilities are clamped away from
    {0, 1} so the log stays finite.  Confident windows push the score
    down; higher scores mean more anomalous.
    """
    p = np.clip(np.asarray(window_probs, dtype=np.float64),
                PROB_CLAMP, 1.0 - PROB_CLAMP)
    if p.size == 0:
        raise InputError("anomaly score needs at least one window")
    return float(np.mean(np.log((1.0 - p) / p)))


def roc_auc(pos_scores: np.ndarray, neg_scores: np.ndarray,
            tie_value: float = 0.0) -> float:
    """Pairwise AUC: the mean of step(pos - neg) over all pairs.

    The step function is literally 1 for positive differences and 0
    otherwise, so exact ties contribute tie_value (default 0).
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise InputError("AUC needs both positive and negative scores")
    diff = pos[:, None] - neg[None, :]
    wins = (diff > 0).sum() + tie_value * (diff == 0).sum()
    if np.all(diff == 0):
        warnings.warn("all score pairs tied; AUC reflects only tie handling")
    return float(wins / diff.size)


def pauc(pos_scores: np.ndarray, neg_scores: np.ndarray, p: float = 0.1,
         tie_value: float = 0.0) -> float:
    """Partial AUC over the strictest decision region.

    Keeps only the ceil(p * N-) highest-scoring negatives (the hardest
    ones) and computes the pairwise AUC against them.
    """
    if not 0.0 < p <= 1.0:
        raise InputError(f"p must be in (0, 1], got {p}")
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64).ravel())[::-1]
    keep = int(np.ceil(p * neg.size))
    if keep == 0:
        raise InputError("no negatives fall inside the partial range")
    return roc_auc(pos_scores, neg[:keep], tie_value=tie_value)


def roc_curve(pos_scores: np.ndarray, neg_scores: np.ndarray) -> np.ndarray:
    """ROC points as (fpr, tpr) rows from (0, 0) to (1, 1).

    One point per distinct score threshold, thresholds descending, so the
    curve is ready for plotting or trapezoid integration.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise InputError("ROC needs both positive and negative scores")
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    tpr = (pos[None, :] >= thresholds[:, None]).mean(axis=1)
    fpr = (neg[None, :] >= thresholds[:, None]).mean(axis=1)
    pts = np.column_stack([fpr, tpr])
    return np.vstack([[0.0, 0.0], pts, [1.0, 1.0]])


# ---------------------------------------------------------------------------
# report container
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class EvalReport:
    """Named metrics for one evaluation pass, all in [0, 1]."""

    task: str
    metrics: dict[str, float]
    curves: dict[str, np.ndarray] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.metrics.items():
            if not np.isfinite(value) or not 0.0 <= value <= 1.0:
                raise InputError(f"metric {name}={value} outside [0, 1]")

    def lines(self) -> list[str]:
        return [f"{name}: {value:.6f}" for name, value in sorted(self.metrics.items())]
