"""
ROC-AUC
Mann-Whitney form: (#{pos > neg} + 0.5 * #{ties}) / (#pos * #neg),
computed from average ranks in O(n log n).
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from cosgauss_frontend.errors import ShapeMismatchError


@dataclass
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(int)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ShapeMismatchError("scores and labels must be vectors of equal length")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        if self.labels.min(initial=1) == 1 or self.labels.max(initial=0) == 0:
            raise ValueError("AUC needs at least one positive and one negative example")


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve, ties credited half"""
    s = ScoredSet(scores, labels)
    ranks = rankdata(s.scores, method="average")
    n_pos = int(s.labels.sum())
    n_neg = len(s.labels) - n_pos
    rank_sum = ranks[s.labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def brute_force_auc(scores, labels) -> float:
    """O(n^2) pairwise reference for roc_auc"""
    s = ScoredSet(scores, labels)
    pos = s.scores[s.labels == 1]
    neg = s.scores[s.labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(pos) * len(neg)))
