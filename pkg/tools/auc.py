"""Area under the ROC curve."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata
from sklearn.metrics import roc_auc_score


def roc_auc(
    scores: np.ndarray,
    labels: np.ndarray,
    sample_weight: np.ndarray | None = None,
) -> float:
    """ROC AUC via the Mann-Whitney rank statistic.

    Equals ``(concordant pairs + 0.5 * tied pairs) / (P * N)``. With
    ``sample_weight`` every positive/negative pair counts with the product of
    its two weights.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative example")

    if sample_weight is not None:
        return float(roc_auc_score(pos, scores, sample_weight=sample_weight))

    # average ranks give tied pairs half credit
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
