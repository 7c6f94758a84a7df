"""Evaluation primitives: ranking AUC, confusion-matrix metrics, trajectory means."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import APT
from .errors import DegenerateLabels, EmptyTrajectory, LengthMismatch


@dataclass(frozen=True)
class EvalReport:
    auc: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    n: int
    threshold: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "auc": self.auc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "n": self.n,
        }
        if self.threshold is not None:
            d["threshold"] = self.threshold
        d.update(self.extra)
        return d


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score of random positive > random negative), ties half.

    Computed from average ranks, which is exact and O(n log n); the
    pairwise-count definition serves as the test oracle.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise LengthMismatch(f"scores {s.shape} vs labels {y.shape}")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, got {n_pos} positive / {n_neg} negative")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=float)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[order[j + 1]] == s[order[i]]:
            j += 1
        # tied block shares the average of ranks i+1 .. j+1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def classification_report(actions, labels, auc_value: float | None = None) -> EvalReport:
    """Confusion-matrix metrics with the intrusion class as positive."""
    a = np.asarray(actions)
    y = np.asarray(labels)
    if a.shape != y.shape or a.ndim != 1:
        raise LengthMismatch(f"actions {a.shape} vs labels {y.shape}")
    tp = int(((a == 1) & (y == APT)).sum())
    fp = int(((a == 1) & (y != APT)).sum())
    tn = int(((a == 0) & (y != APT)).sum())
    fn = int(((a == 0) & (y == APT)).sum())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    if auc_value is None:
        auc_value = float("nan")
    return EvalReport(
        auc=auc_value, precision=precision, recall=recall, f1=f1,
        tp=tp, fp=fp, tn=tn, fn=fn, n=len(a),
    )


def trajectory_mean(per_iteration: list[EvalReport]) -> tuple[float, float]:
    """Mean AUC and F1 over a campaign's per-iteration reports."""
    if not per_iteration:
        raise EmptyTrajectory("no iterations to summarize")
    mean_auc = float(np.mean([r.auc for r in per_iteration]))
    mean_f1 = float(np.mean([r.f1 for r in per_iteration]))
    return mean_auc, mean_f1
