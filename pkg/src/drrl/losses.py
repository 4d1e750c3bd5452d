"""Loss values and analytic gradients with respect to prediction scores,
plus the learnable per-user margin machinery for the robust Renyi loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LOSS_KINDS = ("mse", "bce", "bpr", "sl", "ccl", "drrl")


@dataclass
class LossSpec:
    kind: str = "drrl"
    tau: float = 0.2            # softmax temperature
    alpha: float = 1.0          # ccl negative rescale
    margin: float = 0.0         # ccl fixed margin
    gamma_star: float = 2.0     # conjugate Renyi exponent, >= 1
    c: float = 1.0              # radius scalar c_gamma(eta), tuned directly
    eps: float = 1e-10          # hinge stabilizer
    beta0: float = 0.5          # margin init
    lr_beta: float = 1e-4       # margin learning rate

    def validate(self):
        errors = []
        if self.kind not in LOSS_KINDS:
            errors.append(f"loss.kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.tau <= 0:
            errors.append("loss.tau must be positive")
        if self.alpha < 0:
            errors.append("loss.alpha must be nonnegative")
        if self.gamma_star < 1:
            errors.append("loss.gamma_star must be at least 1")
        if self.c <= 0:
            errors.append("loss.c must be positive")
        if self.eps < 0:
            errors.append("loss.eps must be nonnegative")
        if errors:
            raise ValueError("; ".join(errors))
        return self

    @property
    def gamma(self):
        """Renyi order recovered from the configured conjugate exponent;
        gamma_star = 1 maps to the truncated (CCL) limit gamma -> inf."""
        if self.gamma_star == 1.0:
            return math.inf
        return self.gamma_star / (self.gamma_star - 1.0)


@dataclass
class MarginState:
    beta: np.ndarray

    @classmethod
    def initialize(cls, num_users, beta0):
        return cls(np.full(num_users, float(beta0)))

    def copy(self):
        return MarginState(self.beta.copy())


@dataclass
class UserLossInput:
    pos_scores: np.ndarray
    neg_scores: np.ndarray
    false_negative_mask: np.ndarray | None = None

    def __post_init__(self):
        self.pos_scores = np.asarray(self.pos_scores, dtype=float)
        self.neg_scores = np.asarray(self.neg_scores, dtype=float)


@dataclass
class LossOutput:
    value: float
    d_pos: np.ndarray
    d_neg: np.ndarray


def _require_positives(inp):
    if inp.pos_scores.size == 0:
        raise ValueError("loss needs at least one positive score")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def mse_loss(inp: UserLossInput) -> LossOutput:
    """Squared error against targets 1 (positives) and 0 (negatives)."""
    _require_positives(inp)
    fp, fn = inp.pos_scores, inp.neg_scores
    value = np.mean((fp - 1.0) ** 2)
    d_pos = 2.0 * (fp - 1.0) / fp.size
    if fn.size:
        value = value + np.mean(fn**2)
        d_neg = 2.0 * fn / fn.size
    else:
        d_neg = np.zeros(0)
    return LossOutput(float(value), d_pos, d_neg)


def bce_loss(inp: UserLossInput) -> LossOutput:
    _require_positives(inp)
    fp, fn = inp.pos_scores, inp.neg_scores
    value = -np.mean(np.log(_sigmoid(fp)))
    d_pos = -(1.0 - _sigmoid(fp)) / fp.size
    if fn.size:
        value = value - np.mean(np.log(1.0 - _sigmoid(fn)))
        d_neg = _sigmoid(fn) / fn.size
    else:
        d_neg = np.zeros(0)
    return LossOutput(float(value), d_pos, d_neg)


def bpr_loss(inp: UserLossInput) -> LossOutput:
    """Mean over all (positive, negative) pairs of -log sigmoid(f+ - f-)."""
    _require_positives(inp)
    fp, fn = inp.pos_scores, inp.neg_scores
    if fn.size == 0:
        raise ValueError("pairwise loss needs at least one negative score")
    diff = fp[:, None] - fn[None, :]
    sig = _sigmoid(diff)
    n_pairs = diff.size
    value = float(np.mean(-np.log(sig)))
    d_pos = (sig - 1.0).sum(axis=1) / n_pairs
    d_neg = (1.0 - sig).sum(axis=0) / n_pairs
    return LossOutput(value, d_pos, d_neg)


def softmax_loss(inp: UserLossInput, tau) -> LossOutput:
    """Negatives-only softmax form: -mean(f+)/tau + log sum_j exp(f-/tau)."""
    _require_positives(inp)
    if tau <= 0:
        raise ValueError("tau must be positive")
    fp, fn = inp.pos_scores, inp.neg_scores
    if fn.size == 0:
        raise ValueError("softmax loss needs at least one negative score")
    z = fn / tau
    zmax = z.max()
    expz = np.exp(z - zmax)
    lse = zmax + math.log(expz.sum())
    value = float(-np.mean(fp) / tau + lse)
    d_pos = np.full(fp.size, -1.0 / (tau * fp.size))
    d_neg = expz / expz.sum() / tau
    return LossOutput(value, d_pos, d_neg)


def sl_worst_case_weights(neg_scores, tau):
    """Mean-one exponential weights  w_j = exp(f_j/tau) / mean_k exp(f_k/tau)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    f = np.asarray(neg_scores, dtype=float)
    z = f / tau
    expz = np.exp(z - z.max())
    return expz / expz.mean()


def ccl_loss(inp: UserLossInput, alpha, margin) -> LossOutput:
    """Truncated point-wise loss: -mean(f+) + (alpha/n) sum (f- - margin)_+."""
    _require_positives(inp)
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    fp, fn = inp.pos_scores, inp.neg_scores
    value = -np.mean(fp)
    d_pos = np.full(fp.size, -1.0 / fp.size)
    if fn.size:
        hinge = np.maximum(fn - margin, 0.0)
        value = value + alpha * np.mean(hinge)
        # subgradient 0 at the kink f = margin
        d_neg = np.where(fn > margin, alpha / fn.size, 0.0)
    else:
        d_neg = np.zeros(0)
    return LossOutput(float(value), d_pos, d_neg)


def _drrl_negative_term(fn, gamma_star, c, eps, beta):
    """M = (mean [c (f - beta)_+ + eps]^{g*})^{1/g*} and its pieces."""
    hinge = np.maximum(fn - beta, 0.0)
    inner = c * hinge + eps
    power = np.mean(inner**gamma_star)
    m = power ** (1.0 / gamma_star)
    return m, inner, hinge


def drrl_loss(inp: UserLossInput, gamma_star, c, eps, beta_u) -> LossOutput:
    """Robust Renyi loss with margin beta_u:
    -mean(f+) + (mean [c (f- - beta)_+ + eps]^{g*})^{1/g*}."""
    _require_positives(inp)
    if gamma_star < 1 or c <= 0 or eps < 0:
        raise ValueError("need gamma_star >= 1, c > 0, eps >= 0")
    fp, fn = inp.pos_scores, inp.neg_scores
    value = -np.mean(fp)
    d_pos = np.full(fp.size, -1.0 / fp.size)
    if fn.size == 0:
        return LossOutput(float(value), d_pos, np.zeros(0))
    m, inner, _ = _drrl_negative_term(fn, gamma_star, c, eps, beta_u)
    value = value + m
    if m == 0.0:
        # fully truncated with eps = 0: one-sided limit, all-zero gradient
        d_neg = np.zeros(fn.size)
    else:
        d_neg = (
            m ** (1.0 - gamma_star)
            / fn.size
            * inner ** (gamma_star - 1.0)
            * c
            * (fn > beta_u)
        )
    return LossOutput(float(value), d_pos, d_neg)


def drrl_beta_objective(neg_scores, gamma_star, c, eps, beta):
    """Margin objective beta + M(beta); convex in beta."""
    fn = np.asarray(neg_scores, dtype=float)
    m, _, _ = _drrl_negative_term(fn, gamma_star, c, eps, beta)
    return float(beta + m)


def drrl_beta_gradient(neg_scores, gamma_star, c, eps, beta):
    """d/d beta of the margin objective:
    1 - (M^{1-g*}/n) sum [c (f-beta)_+ + eps]^{g*-1} c 1[f > beta]."""
    fn = np.asarray(neg_scores, dtype=float)
    m, inner, _ = _drrl_negative_term(fn, gamma_star, c, eps, beta)
    if m == 0.0:
        return 1.0
    s = np.sum(inner ** (gamma_star - 1.0) * c * (fn > beta))
    return float(1.0 - m ** (1.0 - gamma_star) / fn.size * s)


def beta_step(state: MarginState, beta_grads: dict, lr_beta) -> MarginState:
    """SGD descent step on the per-user margins; users absent from
    `beta_grads` are untouched."""
    if lr_beta <= 0:
        raise ValueError("lr_beta must be positive")
    for user, grad in beta_grads.items():
        state.beta[user] -= lr_beta * grad
    return state


def drrl_worst_case_weights(neg_scores, gamma, c, beta):
    """Polynomial worst-case weights
    w_j = c (f_j - beta)_+^{1/(g-1)} / (mean (f - beta)_+^{g*})^{1/g}.

    Returns (weights, degenerate_flag); the flag is set when every score is
    truncated and the weights are identically zero.
    """
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    f = np.asarray(neg_scores, dtype=float)
    gstar = gamma / (gamma - 1.0)
    hinge = np.maximum(f - beta, 0.0)
    denom_power = np.mean(hinge**gstar)
    if denom_power == 0.0:
        return np.zeros(f.size), True
    w = c * hinge ** (1.0 / (gamma - 1.0)) / denom_power ** (1.0 / gamma)
    return w, False


def user_loss(inp: UserLossInput, spec: LossSpec, beta_u=None) -> LossOutput:
    """Dispatch a single user's loss by spec kind."""
    kind = spec.kind
    if kind == "mse":
        return mse_loss(inp)
    if kind == "bce":
        return bce_loss(inp)
    if kind == "bpr":
        return bpr_loss(inp)
    if kind == "sl":
        return softmax_loss(inp, spec.tau)
    if kind == "ccl":
        return ccl_loss(inp, spec.alpha, spec.margin)
    if kind == "drrl":
        if beta_u is None:
            raise ValueError("drrl loss needs the user's margin")
        return drrl_loss(inp, spec.gamma_star, spec.c, spec.eps, beta_u)
    raise ValueError(f"unknown loss kind {kind!r}")


def batch_loss(pair_inputs, spec: LossSpec, margins: MarginState | None = None):
    """Average per-pair losses over a batch.

    `pair_inputs` is a sequence of (user_id, UserLossInput); returns the
    scalar batch loss and the per-pair LossOutput list with gradients scaled
    by 1/len(pair_inputs).
    """
    if not pair_inputs:
        raise ValueError("empty batch")
    n = len(pair_inputs)
    outputs = []
    total = 0.0
    for user, inp in pair_inputs:
        beta_u = margins.beta[user] if (margins is not None and spec.kind == "drrl") else None
        out = user_loss(inp, spec, beta_u)
        total += out.value
        outputs.append(LossOutput(out.value, out.d_pos / n, out.d_neg / n))
    return total / n, outputs
