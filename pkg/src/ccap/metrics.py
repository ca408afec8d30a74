"""Binary-classification evaluation: confusion metrics, AUC, and curves.

Conventions used throughout:

* predicted positive means score >= threshold (default 0.5),
* AUC is the tie-adjusted Mann-Whitney statistic,
  P(s+ > s-) + 0.5 * P(s+ = s-), computed from average ranks,
* metric cells that would divide 0/0 report 0.0 and flag the degeneracy
  instead of aborting, so batch reports stay total.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    kappa: float
    degenerate: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class EvalReport:
    """One Table-style report row: five metrics plus curve data."""

    precision: float
    recall: float
    f1: float
    auc: float
    kappa: float
    confusion: ConfusionMatrix
    roc_points: np.ndarray  # (k, 2) of (fpr, tpr), starts (0,0), ends (1,1)
    pr_points: np.ndarray  # (k, 2) of (recall, precision)
    threshold: float
    degenerate: frozenset[str] = field(default_factory=frozenset)


def _as_arrays(y, scores) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != scores.shape:
        raise ValueError(
            f"labels ({y.size}) and scores ({scores.size}) differ in length"
        )
    return y, scores


def confusion(y, scores, threshold: float = 0.5) -> ConfusionMatrix:
    """Tally the four confusion cells at the given decision threshold."""
    y, scores = _as_arrays(y, scores)
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    pred = scores >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def classification_metrics(c: ConfusionMatrix) -> ClassMetrics:
    """Precision, recall, F1, and Cohen's kappa from a confusion matrix.

    precision = tp/(tp+fp), recall = tp/(tp+fn),
    f1 = 2*precision*recall/(precision+recall),
    kappa = (Po - Pe)/(1 - Pe) with Po the observed and Pe the chance
    agreement. Empty denominators yield 0.0 with a degeneracy flag.
    """
    n = c.total
    if n <= 0:
        raise ValueError("empty confusion matrix")
    flags = set()

    if c.tp + c.fp > 0:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision = 0.0
        flags.add("precision")
    if c.tp + c.fn > 0:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall = 0.0
        flags.add("recall")
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.add("f1")

    po = (c.tp + c.tn) / n
    pe = ((c.tp + c.fp) * (c.tp + c.fn) + (c.fn + c.tn) * (c.fp + c.tn)) / (n * n)
    if 1.0 - pe != 0.0:
        kappa = (po - pe) / (1.0 - pe)
    else:
        kappa = 0.0
        flags.add("kappa")

    return ClassMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        kappa=kappa,
        degenerate=frozenset(flags),
    )


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    # boundaries of tie groups in sorted order
    boundary = np.empty(scores.size, dtype=bool)
    boundary[0] = True
    boundary[1:] = sorted_scores[1:] != sorted_scores[:-1]
    group_start = np.flatnonzero(boundary)
    group_end = np.append(group_start[1:], scores.size)
    # mean of the 1-based ranks start+1 .. end within each tie group
    group_rank = 0.5 * (group_start + 1 + group_end)
    ranks[order] = np.repeat(group_rank, group_end - group_start)
    return ranks


def auc(y, scores) -> float:
    """Area under the ROC curve via the tie-adjusted rank statistic."""
    y, scores = _as_arrays(y, scores)
    n_pos = int(np.sum(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined with a single class present")
    ranks = _average_ranks(scores)
    rank_sum = float(np.sum(ranks[y == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _threshold_counts(y: np.ndarray, scores: np.ndarray):
    """Cumulative (tp, fp) after each distinct threshold, descending."""
    order = np.argsort(-scores, kind="stable")
    ys = y[order]
    ss = scores[order]
    # last index of each tie group = the state after applying that threshold
    last = np.flatnonzero(np.append(ss[1:] != ss[:-1], True))
    tps = np.cumsum(ys)[last]
    fps = np.cumsum(1.0 - ys)[last]
    return tps, fps


def curve_points(y, scores, kind: str) -> np.ndarray:
    """ROC or PR curve points, one per distinct threshold (descending).

    ROC points are (fpr, tpr) prefixed with (0,0); the final point is
    (1,1). PR points are (recall, precision) with the first point taken at
    the top-ranked item. The trapezoid area over the ROC points equals
    ``auc`` exactly.
    """
    y, scores = _as_arrays(y, scores)
    n_pos = int(np.sum(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("curves are undefined with a single class present")
    tps, fps = _threshold_counts(y, scores)
    if kind == "roc":
        pts = np.column_stack([fps / n_neg, tps / n_pos])
        return np.vstack([[0.0, 0.0], pts])
    if kind == "pr":
        recall = tps / n_pos
        precision = tps / (tps + fps)
        return np.column_stack([recall, precision])
    raise ValueError(f"unknown curve kind {kind!r}")


def evaluate_model(scores, y, threshold: float = 0.5) -> EvalReport:
    """Assemble the full per-model report row."""
    y, scores = _as_arrays(y, scores)
    c = confusion(y, scores, threshold)
    m = classification_metrics(c)
    return EvalReport(
        precision=m.precision,
        recall=m.recall,
        f1=m.f1,
        auc=auc(y, scores),
        kappa=m.kappa,
        confusion=c,
        roc_points=curve_points(y, scores, "roc"),
        pr_points=curve_points(y, scores, "pr"),
        threshold=threshold,
        degenerate=m.degenerate,
    )
