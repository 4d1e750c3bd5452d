"""Top-K ranking metrics plus the diagnostic weight and truncation
statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class WeightStats:
    k1: float          # max weight / mean weight
    k2: float | None   # mean weight over false negatives / mean weight
    degenerate: bool = False


def top_k_items(scores, exclude, k):
    """Indices of the top-k items by score, excluding `exclude`; ties broken
    by ascending item id."""
    scores = np.asarray(scores, dtype=float)
    masked = scores.copy()
    if exclude:
        masked[sorted(exclude)] = -np.inf
    ids = np.arange(masked.size)
    # lexsort: last key is primary; -score descending, then id ascending
    order = np.lexsort((ids, -masked))
    order = order[np.isfinite(masked[order])]
    return order[:k]


def recall_at_k(scores, exclude, truth, k):
    """|top-k hits| / |truth| over the candidate items outside `exclude`."""
    if not truth:
        raise ValueError("ground truth must be nonempty")
    top = top_k_items(scores, exclude, k)
    hits = sum(1 for item in top if item in truth)
    return hits / len(truth)


def ndcg_at_k(scores, exclude, truth, k):
    """Binary-relevance NDCG with log2 position discount."""
    if not truth:
        raise ValueError("ground truth must be nonempty")
    top = top_k_items(scores, exclude, k)
    dcg = sum(
        1.0 / np.log2(rank + 2) for rank, item in enumerate(top) if item in truth
    )
    ideal = min(k, len(truth))
    idcg = sum(1.0 / np.log2(rank + 2) for rank in range(ideal))
    return float(dcg / idcg)


def evaluate_ranking(score_matrix, exclude_sets, truth_sets, ks):
    """Average Recall@K / NDCG@K over users with nonempty ground truth.

    Returns {(metric, K): value}; users with empty truth are skipped.
    """
    sums = {("recall", k): 0.0 for k in ks}
    sums.update({("ndcg", k): 0.0 for k in ks})
    n_scored = 0
    for user, truth in enumerate(truth_sets):
        if not truth:
            continue
        n_scored += 1
        row = score_matrix[user]
        exclude = exclude_sets[user]
        for k in ks:
            sums[("recall", k)] += recall_at_k(row, exclude, truth, k)
            sums[("ndcg", k)] += ndcg_at_k(row, exclude, truth, k)
    if n_scored == 0:
        raise ValueError("no user has ground-truth items")
    return {key: val / n_scored for key, val in sums.items()}


def weight_stats(weights, false_negative_mask=None) -> WeightStats:
    """k1 = max/mean weight; k2 = mean weight over flagged false negatives
    relative to the overall mean (absent when the mask is empty)."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("weights must be nonempty")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    mean = w.mean()
    if mean == 0.0:
        return WeightStats(k1=float("nan"), k2=None, degenerate=True)
    k1 = float(w.max() / mean)
    k2 = None
    if false_negative_mask is not None:
        mask = np.asarray(false_negative_mask, dtype=bool)
        if mask.shape != w.shape:
            raise ValueError("mask length must equal weights length")
        if mask.any():
            k2 = float(w[mask].mean() / mean)
    return WeightStats(k1=k1, k2=k2)


def truncation_ratio(neg_scores, beta):
    """Fraction of negatives with score <= beta (zero-gradient region)."""
    f = np.asarray(neg_scores, dtype=float)
    if f.size == 0:
        raise ValueError("scores must be nonempty")
    return float(np.mean(f <= beta))
