"""Verdict fusion: majority voting and AUC-weighted probability averaging."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroWeights, DegenerateLabels, EmptyVoteSet, LengthMismatch
from .metrics import auc

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnsembleWeights:
    weights: tuple[float, ...]
    source_auc: tuple[float, ...]

    def __post_init__(self) -> None:
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise AllZeroWeights(f"weights must sum to 1, got {sum(self.weights)}")
        if any(w < 0 for w in self.weights):
            raise AllZeroWeights("weights must be non-negative")

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "source_auc": list(self.source_auc)}


def majority_vote(actions) -> int:
    """Most common action wins; an exact tie flags the record as hostile."""
    votes = list(actions)
    if not votes:
        raise EmptyVoteSet("no votes to aggregate")
    ones = sum(1 for v in votes if v == 1)
    zeros = len(votes) - ones
    return 1 if ones >= zeros else 0


def weighted_vote(p_apts, aucs) -> float:
    p = np.asarray(p_apts, dtype=float)
    a = np.asarray(aucs, dtype=float)
    if p.shape != a.shape or p.ndim != 1 or len(p) == 0:
        raise LengthMismatch(f"probabilities {p.shape} vs aucs {a.shape}")
    if (a < 0).any():
        raise AllZeroWeights("negative auc weight")
    total = a.sum()
    if total == 0:
        raise AllZeroWeights("all auc weights are zero")
    return float((a / total) @ p)


def fit_weights(validation_scores: list[tuple]) -> EnsembleWeights:
    """Weight each agent by its validation AUC, normalized to sum 1.

    A single-class validation split cannot produce an AUC; rather than
    abort the campaign we fall back to uniform weights and warn.
    """
    if not validation_scores:
        raise EmptyVoteSet("no agents to weight")
    aucs = []
    try:
        for scores, labels in validation_scores:
            aucs.append(auc(scores, labels))
    except DegenerateLabels:
        log.warning(
            "validation split is single-class; falling back to uniform ensemble weights"
        )
        n = len(validation_scores)
        return EnsembleWeights(
            weights=tuple(1.0 / n for _ in range(n)),
            source_auc=tuple(float("nan") for _ in range(n)),
        )
    total = sum(aucs)
    if total == 0:
        # every agent ranked perfectly backwards; uniform is the only sane fallback
        log.warning("all validation AUCs are zero; using uniform ensemble weights")
        n = len(aucs)
        return EnsembleWeights(
            weights=tuple(1.0 / n for _ in range(n)), source_auc=tuple(aucs)
        )
    return EnsembleWeights(
        weights=tuple(a / total for a in aucs), source_auc=tuple(aucs)
    )


def ensemble_action(p_ensemble: float) -> int:
    """Threshold the fused probability at 0.5, ties resolving to hostile."""
    return 1 if p_ensemble >= 0.5 else 0
