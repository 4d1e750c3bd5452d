"""Mini-batch training: Adam on embeddings, SGD on per-user margins,
weight decay, validation-based early stopping."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses as L
from .dataio import BatchSample, DatasetSplit, NoiseConfig, sample_batch
from .graphmodel import (
    BackboneConfig,
    EmbeddingTable,
    InteractionGraph,
    backward,
    cosine_matrix,
    forward,
    infonce_auxiliary,
)
from .metrics import evaluate_ranking

MARGIN_MODES = ("per_user", "shared", "fixed")


@dataclass
class TrainConfig:
    batch_size: int = 1024
    n_neg: int = 64
    lr: float = 1e-2
    weight_decay: float = 0.0
    max_epochs: int = 100
    patience: int = 25
    eval_every: int = 1
    seed: int = 0
    embed_dim: int = 64
    init_std: float = 0.1
    metric_k: int = 20
    noise: float = 0.0
    noise_pool: str = "heldout"  # heldout | train
    margin_mode: str = "per_user"  # per_user | shared | fixed (ablations)

    def validate(self):
        errors = []
        for name in ("batch_size", "n_neg", "max_epochs", "patience", "eval_every", "embed_dim"):
            if getattr(self, name) < 1:
                errors.append(f"train.{name} must be positive")
        if self.lr <= 0:
            errors.append("train.lr must be positive")
        if self.weight_decay < 0:
            errors.append("train.weight_decay must be nonnegative")
        if not (0 <= self.noise <= 1):
            errors.append("train.noise must lie in [0, 1]")
        if self.noise_pool not in ("heldout", "train"):
            errors.append("train.noise_pool must be 'heldout' or 'train'")
        if self.margin_mode not in MARGIN_MODES:
            errors.append(f"train.margin_mode must be one of {MARGIN_MODES}")
        if errors:
            raise ValueError("; ".join(errors))
        return self


class Adam:
    """Bias-corrected adaptive update over named parameter arrays."""

    def __init__(self, shapes, beta1=0.9, beta2=0.999, floor=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.floor = floor
        self.step_count = 0
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}

    def step(self, params, grads, lr):
        for g in grads.values():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        self.step_count += 1
        t = self.step_count
        for key, grad in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * grad**2
            m_hat = self.m[key] / (1 - self.beta1**t)
            v_hat = self.v[key] / (1 - self.beta2**t)
            params[key] -= lr * m_hat / (np.sqrt(v_hat) + self.floor)
        return params


def apply_weight_decay(table: EmbeddingTable, grad_user, grad_item, batch_users, batch_items, wd):
    """Add 2 * wd * e to the gradient of every embedding touched by the batch."""
    if wd == 0.0:
        return
    if len(batch_users):
        grad_user[batch_users] += 2.0 * wd * table.user[batch_users]
    if len(batch_items):
        grad_item[batch_items] += 2.0 * wd * table.item[batch_items]


@dataclass
class TrainReport:
    epoch_loss: list = field(default_factory=list)
    val_ndcg: list = field(default_factory=list)     # None on non-eval epochs
    val_recall: list = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = -math.inf
    stop_reason: str = ""

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(
                {
                    "epoch_loss": self.epoch_loss,
                    "val_ndcg": self.val_ndcg,
                    "val_recall": self.val_recall,
                    "best_epoch": self.best_epoch,
                    "best_metric": self.best_metric,
                    "stop_reason": self.stop_reason,
                },
                fh,
                indent=2,
            )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_ndcg", "val_recall"])
            for epoch, loss in enumerate(self.epoch_loss):
                writer.writerow(
                    [epoch, loss, self.val_ndcg[epoch], self.val_recall[epoch]]
                )


def _rowwise_cosine(a, b):
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    return np.sum(a * b, axis=-1) / (na * nb), na, nb


def _pullback_layer(grad_u, grad_i, graph, layer):
    """Adjoint of `layer` propagation steps (the operator is self-adjoint)."""
    for _ in range(layer):
        grad_u, grad_i = graph.propagate(grad_u, grad_i)
    return grad_u, grad_i


def _margin_gradients(batch: BatchSample, neg_scores, spec: L.LossSpec, margins: L.MarginState):
    """Summed margin-objective gradients per batch user."""
    grads: dict = {}
    for b, (user, _pos) in enumerate(batch.pairs):
        g = L.drrl_beta_gradient(
            neg_scores[b], spec.gamma_star, spec.c, spec.eps, margins.beta[user]
        )
        grads[int(user)] = grads.get(int(user), 0.0) + g
    return grads


def loss_and_gradients(
    table, graph, backbone_cfg, spec, margins, batch, noise_rng=None, margin_update=None
):
    """Batch loss plus full-chain embedding-table gradients.

    `margin_update` of "per_user" or "shared" applies one SGD step on the
    margins (before the loss is evaluated); None leaves them alone.
    """
    out = forward(table, graph, backbone_cfg, noise_rng)
    users = batch.pairs[:, 0]
    pos_items = batch.pairs[:, 1]
    eu = out.final_user[users]
    ei = out.final_item[pos_items]
    en = out.final_item[batch.negatives]
    f_pos, nu, ni = _rowwise_cosine(eu, ei)
    f_neg, _, nn = _rowwise_cosine(eu[:, None, :], en)

    # margin update precedes the embedding step (DrRL only)
    if margin_update is not None and spec.kind == "drrl" and margin_update != "fixed":
        grads = _margin_gradients(batch, f_neg, spec, margins)
        if margin_update == "shared":
            total = sum(grads.values())
            margins.beta -= spec.lr_beta * total
        else:
            L.beta_step(margins, grads, spec.lr_beta)

    pair_inputs = [
        (int(users[b]), L.UserLossInput(f_pos[b : b + 1], f_neg[b]))
        for b in range(len(users))
    ]
    value, outputs = L.batch_loss(pair_inputs, spec, margins)

    d_pos = np.array([o.d_pos[0] for o in outputs])
    d_neg = np.stack([o.d_neg for o in outputs])

    un = eu / nu[:, None]
    pn = ei / ni[:, None]
    nnorm = en / nn[:, :, None]
    grad_final_u = np.zeros_like(out.final_user)
    grad_final_i = np.zeros_like(out.final_item)

    gu = d_pos[:, None] * (pn - f_pos[:, None] * un) / nu[:, None]
    gu += (
        np.einsum("bj,bjd->bd", d_neg, nnorm)
        - np.sum(d_neg * f_neg, axis=1)[:, None] * un
    ) / nu[:, None]
    gp = d_pos[:, None] * (un - f_pos[:, None] * pn) / ni[:, None]
    gn = d_neg[:, :, None] * (un[:, None, :] - f_neg[:, :, None] * nnorm) / nn[:, :, None]

    np.add.at(grad_final_u, users, gu)
    np.add.at(grad_final_i, pos_items, gp)
    np.add.at(grad_final_i, batch.negatives.ravel(), gn.reshape(-1, gn.shape[-1]))

    grad_user, grad_item = backward(grad_final_u, grad_final_i, graph, backbone_cfg)

    if backbone_cfg.kind == "xsimgcl" and backbone_cfg.infonce_weight > 0:
        uu = np.unique(users)
        ii = np.unique(np.concatenate([pos_items, batch.negatives.ravel()]))
        for idx, final, contrast, is_user in (
            (uu, out.final_user, out.contrast_user, True),
            (ii, out.final_item, out.contrast_item, False),
        ):
            aux, d_final, d_contrast = infonce_auxiliary(
                final[idx],
                contrast[idx],
                backbone_cfg.infonce_temperature,
                backbone_cfg.infonce_weight,
            )
            value += aux
            gf_u = np.zeros_like(out.final_user)
            gf_i = np.zeros_like(out.final_item)
            gc_u = np.zeros_like(out.final_user)
            gc_i = np.zeros_like(out.final_item)
            if is_user:
                gf_u[idx] = d_final
                gc_u[idx] = d_contrast
            else:
                gf_i[idx] = d_final
                gc_i[idx] = d_contrast
            bu, bi = backward(gf_u, gf_i, graph, backbone_cfg)
            cu, ci = _pullback_layer(gc_u, gc_i, graph, backbone_cfg.contrast_layer)
            grad_user += bu + cu
            grad_item += bi + ci

    return value, grad_user, grad_item


def train_step(
    table, graph, backbone_cfg, spec, margins, split, train_cfg, sample_rng, noise_rng,
    train_pairs, adam,
):
    """One optimization step; returns the batch loss."""
    batch = sample_batch(
        split,
        train_cfg.batch_size,
        train_cfg.n_neg,
        NoiseConfig(train_cfg.noise, train_cfg.noise_pool),
        sample_rng,
        train_pairs=train_pairs,
    )
    if len(batch.pairs) == 0:
        raise ValueError("empty batch (all sampled users lack negatives)")
    value, grad_user, grad_item = loss_and_gradients(
        table, graph, backbone_cfg, spec, margins, batch,
        noise_rng=noise_rng, margin_update=train_cfg.margin_mode,
    )
    users = batch.pairs[:, 0]
    pos_items = batch.pairs[:, 1]
    apply_weight_decay(
        table,
        grad_user,
        grad_item,
        np.unique(users),
        np.unique(np.concatenate([pos_items, batch.negatives.ravel()])),
        train_cfg.weight_decay,
    )
    params = {"user": table.user, "item": table.item}
    adam.step(params, {"user": grad_user, "item": grad_item}, train_cfg.lr)
    return value


def evaluate_split(table, graph, backbone_cfg, split, ks, target="validation"):
    """Full-ranking metrics on an immutable noise-free snapshot."""
    eval_cfg = replace(backbone_cfg, noise_modulus=0.0)
    out = forward(table, graph, eval_cfg)
    scores = cosine_matrix(out.final_user, out.final_item)
    truth = split.validation if target == "validation" else split.test
    return evaluate_ranking(scores, split.train, truth, ks)


def train(
    split: DatasetSplit,
    backbone_cfg: BackboneConfig,
    spec: L.LossSpec,
    train_cfg: TrainConfig,
):
    """Sample, update margins (DrRL), update embeddings, evaluate,
    early-stop. Returns (best table, best margins, report)."""
    backbone_cfg.validate()
    spec.validate()
    train_cfg.validate()
    seeds = np.random.SeedSequence(train_cfg.seed).spawn(3)
    init_seed = seeds[0].generate_state(1)[0]
    sample_rng = np.random.default_rng(seeds[1])
    noise_rng = np.random.default_rng(seeds[2])

    table = EmbeddingTable.init_normal(
        split.num_users, split.num_items, train_cfg.embed_dim,
        std=train_cfg.init_std, seed=init_seed,
    )
    graph = None
    train_pairs = split.train_pairs()
    if backbone_cfg.kind != "mf":
        graph = InteractionGraph(train_pairs, split.num_users, split.num_items)
    margins = L.MarginState.initialize(split.num_users, spec.beta0)
    adam = Adam({"user": table.user.shape, "item": table.item.shape})

    steps_per_epoch = max(1, math.ceil(len(train_pairs) / train_cfg.batch_size))
    report = TrainReport()
    best_table = table.copy()
    best_margins = margins.copy()
    bad_evals = 0
    k = train_cfg.metric_k

    for epoch in range(train_cfg.max_epochs):
        epoch_losses = []
        try:
            for _ in range(steps_per_epoch):
                epoch_losses.append(
                    train_step(
                        table, graph, backbone_cfg, spec, margins, split,
                        train_cfg, sample_rng, noise_rng, train_pairs, adam,
                    )
                )
        except FloatingPointError:
            report.stop_reason = "non-finite gradient; kept last good checkpoint"
            break
        mean_loss = float(np.mean(epoch_losses))
        report.epoch_loss.append(mean_loss)
        if not math.isfinite(mean_loss):
            report.stop_reason = "non-finite loss; kept last good checkpoint"
            break
        if (epoch + 1) % train_cfg.eval_every == 0:
            scores = evaluate_split(table, graph, backbone_cfg, split, [k])
            ndcg = scores[("ndcg", k)]
            recall = scores[("recall", k)]
            report.val_ndcg.append(ndcg)
            report.val_recall.append(recall)
            if ndcg > report.best_metric:
                report.best_metric = ndcg
                report.best_epoch = epoch
                best_table = table.copy()
                best_margins = margins.copy()
                bad_evals = 0
            else:
                bad_evals += 1
                if bad_evals >= train_cfg.patience:
                    report.stop_reason = "early stop: validation patience exhausted"
                    break
        else:
            report.val_ndcg.append(None)
            report.val_recall.append(None)
    if not report.stop_reason:
        report.stop_reason = "max epochs reached"
    if report.best_epoch < 0:
        best_table = table.copy()
        best_margins = margins.copy()
    return best_table, best_margins, report
