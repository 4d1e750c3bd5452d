"""Per-user worst-case weight and truncation diagnostics at a checkpoint.

For every user, the candidate negatives are all items outside the training
set; held-out positives among them are flagged so the k2 statistic (mean
weight on flagged items relative to the overall mean) can be reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses as L
from .dro_core import minimize_beta_objective
from .graphmodel import cosine_matrix, forward
from .metrics import truncation_ratio, weight_stats

DIAGNOSABLE = ("sl", "ccl", "drrl")


@dataclass
class UserDiagnostics:
    user: int
    k1: float
    k2: float | None
    truncation: float | None
    beta: float | None
    degenerate: bool


def _user_weights(neg_scores, spec: L.LossSpec, beta):
    if spec.kind == "sl":
        return L.sl_worst_case_weights(neg_scores, spec.tau), False
    if spec.kind == "ccl" or spec.gamma_star == 1.0:
        w = np.where(neg_scores > beta, spec.alpha if spec.kind == "ccl" else spec.c, 0.0)
        return w, bool(np.all(w == 0.0))
    return L.drrl_worst_case_weights(neg_scores, spec.gamma, spec.c, beta)


def user_diagnostics(
    score_matrix,
    split,
    spec: L.LossSpec,
    margins: L.MarginState | None = None,
    resolve_margin=False,
    noise_pool="heldout",
):
    """Per-user rows of k1, k2, truncation ratio and the margin used.

    `resolve_margin` recomputes each user's margin by minimizing the
    truncated-moment objective on that user's negative scores instead of
    reading it from the trained margin state. `noise_pool` selects which
    items count as false negatives for k2: the user's held-out positives
    (default) or their train positives (in which case train positives also
    join the candidate sweep, mirroring the train-pool noise protocol).
    """
    if spec.kind not in DIAGNOSABLE:
        raise ValueError(
            f"no worst-case weight notion for loss {spec.kind!r}; "
            f"diagnostics support {DIAGNOSABLE}"
        )
    num_items = score_matrix.shape[1]
    rows = []
    for user in range(score_matrix.shape[0]):
        if noise_pool == "train":
            candidates = np.arange(num_items, dtype=np.int64)
            flagged = np.array([int(i) in split.train[user] for i in candidates])
        else:
            candidates = np.asarray(
                sorted(set(range(num_items)) - split.train[user]), dtype=np.int64
            )
            flagged = np.array([int(i) in split.heldout(user) for i in candidates])
        if candidates.size == 0:
            continue
        f = score_matrix[user, candidates]

        beta = None
        if spec.kind != "sl":
            if resolve_margin:
                if spec.kind == "ccl":
                    beta, _ = minimize_beta_objective(f, 1.0, spec.alpha, 0.0)
                else:
                    beta, _ = minimize_beta_objective(f, spec.gamma_star, spec.c, spec.eps)
            elif margins is not None:
                beta = float(margins.beta[user])
            else:
                beta = spec.beta0
        w, degenerate = _user_weights(f, spec, beta)
        if degenerate or np.all(w == 0.0):
            rows.append(UserDiagnostics(user, float("nan"), None,
                                        None if beta is None else truncation_ratio(f, beta),
                                        beta, True))
            continue
        stats = weight_stats(w, flagged if flagged.any() else None)
        rows.append(
            UserDiagnostics(
                user, stats.k1, stats.k2,
                None if beta is None else truncation_ratio(f, beta),
                beta, False,
            )
        )
    return rows


def aggregate(rows):
    """Mean k1 / k2 / truncation over non-degenerate users."""
    live = [r for r in rows if not r.degenerate]
    k2s = [r.k2 for r in live if r.k2 is not None]
    truncs = [r.truncation for r in rows if r.truncation is not None]
    return {
        "users": len(rows),
        "degenerate_users": sum(r.degenerate for r in rows),
        "k1_mean": float(np.mean([r.k1 for r in live])) if live else float("nan"),
        "k2_mean": float(np.mean(k2s)) if k2s else None,
        "truncation_mean": float(np.mean(truncs)) if truncs else None,
    }


def checkpoint_scores(table, graph, backbone_cfg):
    """Noise-free cosine score matrix at a checkpoint."""
    from dataclasses import replace

    out = forward(table, graph, replace(backbone_cfg, noise_modulus=0.0))
    return cosine_matrix(out.final_user, out.final_item)
