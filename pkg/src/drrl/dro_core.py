"""Divergences, Fenchel conjugates, and a brute-force solver for the
constrained inner maximization  max_Q E_Q[f]  s.t.  D(Q, P) <= eta,
with P uniform over the sampled negatives.

The brute-force route is deliberately independent of the closed-form dual:
it climbs the feasible set directly (projected ascent with feasibility
bisection, Dirichlet restarts, and an SLSQP polish) so that the dual
formulas can be certified numerically against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

KL = "kl"
WORST_REGRET = "worst_regret"
CRESSIE_READ = "cressie_read"

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class DivergenceKind:
    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in (KL, WORST_REGRET, CRESSIE_READ):
            raise ValueError(f"unknown divergence kind: {self.kind!r}")
        if self.kind == CRESSIE_READ:
            if self.gamma is None or self.gamma <= 1.0:
                raise ValueError("Cressie-Read divergence needs gamma > 1")

    @classmethod
    def kl(cls):
        return cls(KL)

    @classmethod
    def worst_regret(cls):
        return cls(WORST_REGRET)

    @classmethod
    def cressie_read(cls, gamma):
        return cls(CRESSIE_READ, gamma)


@dataclass(frozen=True)
class DroInstance:
    """Scores of sampled negatives with a uniform base distribution and
    a robustness radius eta."""

    scores: np.ndarray
    eta: float

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 1 or scores.size == 0:
            raise ValueError("scores must be a nonempty 1-d array")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        object.__setattr__(self, "scores", scores)

    @property
    def n(self):
        return self.scores.size

    @property
    def base(self):
        return np.full(self.n, 1.0 / self.n)


@dataclass
class InnerMaxResult:
    value: float
    q: np.ndarray
    divergence: float
    converged: bool


@dataclass
class DualCertificate:
    beta_star: float
    lambda_star: float
    dual_value: float
    primal_value: float

    @property
    def gap(self):
        return abs(self.dual_value - self.primal_value)


def gamma_conjugate(gamma):
    """gamma* = gamma / (gamma - 1)."""
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    return gamma / (gamma - 1.0)


def phi_gamma(t, gamma):
    """Cressie-Read generator phi_gamma(t) = (t^g - g t + g - 1) / (g (g-1))."""
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("phi_gamma is defined for t >= 0 only")
    out = (t**gamma - gamma * t + gamma - 1.0) / (gamma * (gamma - 1.0))
    return float(out) if out.ndim == 0 else out


def phi_conjugate(x, gamma):
    """Fenchel conjugate of phi_gamma:
    phi*(x) = ((g-1) x + 1)_+^{g*} / g - 1/g."""
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    gstar = gamma_conjugate(gamma)
    x = np.asarray(x, dtype=float)
    inner = np.maximum((gamma - 1.0) * x + 1.0, 0.0)
    out = inner**gstar / gamma - 1.0 / gamma
    return float(out) if out.ndim == 0 else out


def c_gamma(eta, gamma):
    """Scalar radius reparameterization (1 + g (g-1) eta)^{1/g}."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    return (1.0 + gamma * (gamma - 1.0) * eta) ** (1.0 / gamma)


def divergence(q, p, kind: DivergenceKind):
    """D(Q, P) for the three supported divergences.

    Returns math.inf (never clipped) when Q puts mass where P has none.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise ValueError("Q and P must have the same length")
    if np.any((q > 0) & (p == 0)):
        return math.inf
    support = q > 0
    if kind.kind == KL:
        return float(np.sum(q[support] * np.log(q[support] / p[support])))
    if kind.kind == WORST_REGRET:
        if not np.any(support):
            return math.inf
        return float(np.max(np.log(q[support] / p[support])))
    ratio = np.zeros_like(q)
    pos = p > 0
    ratio[pos] = q[pos] / p[pos]
    return float(np.sum(p[pos] * phi_gamma(ratio[pos], kind.gamma)))


def project_simplex(v):
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def golden_section(fn, a, b, tol=1e-8):
    """Golden-section minimization of a unimodal function on [a, b].

    Returns (x_min, f_min) with bracket width below tol.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return x, fn(x)
    n = int(math.ceil(math.log(tol / h) / math.log(_INV_PHI)))
    c = a + _INV_PHI2 * h
    d = a + _INV_PHI * h
    yc = fn(c)
    yd = fn(d)
    for _ in range(n - 1):
        h *= _INV_PHI
        if yc < yd:
            b, d, yd = d, c, yc
            c = a + _INV_PHI2 * h
            yc = fn(c)
        else:
            a, c, yc = c, d, yd
            d = a + _INV_PHI * h
            yd = fn(d)
    if yc < yd:
        return c, yc
    return d, yd


def _div_fast(q, p, kind):
    """Divergence without validation, for the bisection hot path."""
    if kind.kind == KL:
        support = q > 0
        return float(np.sum(q[support] * np.log(q[support] * q.size)))
    g = kind.gamma
    t = q * q.size
    return float(np.mean(t**g - g * t + g - 1.0)) / (g * (g - 1.0))


def _feasible_toward(p, q, kind, eta, iters=60):
    """Largest point on the segment P -> Q with divergence <= eta.

    D is convex with D(P) = 0, so the feasible t form an interval [0, t*].
    """
    if _div_fast(q, kind=kind, p=p) <= eta:
        return q
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _div_fast((1 - mid) * p + mid * q, p, kind) <= eta:
            lo = mid
        else:
            hi = mid
    return (1 - lo) * p + lo * q


def _segment_step(q, target, p, kind, eta, iters=50):
    """Largest point on the feasible segment from Q toward `target`."""
    if _div_fast(target, p, kind) <= eta:
        return target
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        cand = (1 - mid) * q + mid * target
        if _div_fast(cand, p, kind) <= eta:
            lo = mid
        else:
            hi = mid
    return (1 - lo) * q + lo * target


def _ascend(q, f, p, kind, eta, max_iters=80):
    """Feasible-direction ascent of the linear objective f . Q.

    The objective is linear and the feasible set convex, so any local
    maximum found this way is global; restarts are insurance only.
    """
    value = float(f @ q)
    step = 1.0
    for _ in range(max_iters):
        target = project_simplex(q + step * f)
        cand = _segment_step(q, target, p, kind, eta)
        cand_value = float(f @ cand)
        if cand_value > value + 1e-14:
            q, value = cand, cand_value
        else:
            step *= 0.5
            if step < 1e-10:
                break
    return q, value


def _wr_greedy(scores, p, alpha_cap):
    """Exact maximizer under the worst-case-regret ball: each coordinate is
    capped at alpha * P_j; fill the caps in descending score order."""
    n = scores.size
    cap = alpha_cap * p
    order = np.argsort(-scores, kind="stable")
    q = np.zeros(n)
    mass = 1.0
    for j in order:
        take = min(cap[j], mass)
        q[j] = take
        mass -= take
        if mass <= 0:
            break
    return q


def _div_grad(q, p, kind):
    q = np.maximum(q, 1e-15)
    ratio = q / p
    if kind.kind == KL:
        return np.log(ratio) + 1.0
    g = kind.gamma
    return (ratio ** (g - 1.0) - 1.0) / (g - 1.0)


def _slsqp_polish(q0, f, p, kind, eta):
    n = f.size
    cons = [
        {"type": "eq", "fun": lambda q: q.sum() - 1.0,
         "jac": lambda q: np.ones(n)},
        {"type": "ineq", "fun": lambda q: eta - divergence(q, p, kind),
         "jac": lambda q: -_div_grad(q, p, kind)},
    ]
    res = minimize(
        lambda q: -f @ q,
        q0,
        jac=lambda q: -f,
        bounds=[(0.0, 1.0)] * n,
        constraints=cons,
        method="SLSQP",
        options={"maxiter": 200, "ftol": 1e-14},
    )
    q = np.maximum(res.x, 0.0)
    s = q.sum()
    if s <= 0:
        return None
    q = q / s
    return _feasible_toward(p, q, kind, eta)


def inner_max_bruteforce(
    inst: DroInstance,
    kind: DivergenceKind,
    seed=0,
    restarts=4,
    max_iters=40,
    polish=True,
) -> InnerMaxResult:
    """Numerically maximize E_Q[f] over the divergence ball around uniform P.

    Projected ascent on the simplex with feasibility bisection, restarted
    from Dirichlet draws (dense grid refinement for very small n), then an
    SLSQP polish from the best point found.
    """
    f = inst.scores
    p = inst.base
    n = inst.n
    eta = inst.eta
    if eta == 0.0:
        return InnerMaxResult(float(f @ p), p.copy(), 0.0, True)
    if kind.kind == WORST_REGRET:
        q = _wr_greedy(f, p, math.exp(eta))
        return InnerMaxResult(float(f @ q), q, divergence(q, p, kind), True)

    rng = np.random.default_rng(seed)
    starts = [p.copy()]
    for draw in rng.dirichlet(np.ones(n), size=restarts):
        starts.append(_feasible_toward(p, draw, kind, eta))
    if n <= 5:
        # dense refinement: push random directions to the ball boundary
        draws = rng.dirichlet(np.ones(n), size=500)
        values = []
        pushed = []
        for draw in draws:
            q = _feasible_toward(p, draw, kind, eta, iters=30)
            pushed.append(q)
            values.append(f @ q)
        best = np.argsort(values)[-4:]
        starts.extend(pushed[i] for i in best)

    best_q, best_v = None, -math.inf
    for q0 in starts:
        q, v = _ascend(q0, f, p, kind, eta, max_iters=max_iters)
        if v > best_v:
            best_q, best_v = q, v

    converged = True
    if polish:
        polished = _slsqp_polish(best_q, f, p, kind, eta)
        if polished is not None:
            v = float(f @ polished)
            if v > best_v:
                best_q, best_v = polished, v
    achieved = divergence(best_q, p, kind)
    if achieved > eta + 1e-6:
        best_q = _feasible_toward(p, best_q, kind, eta)
        best_v = float(f @ best_q)
        achieved = divergence(best_q, p, kind)
        converged = False
    return InnerMaxResult(best_v, best_q, achieved, converged)


def dual_value(inst: DroInstance, gamma, beta):
    """Closed-form dual objective beta + c_gamma(eta) * ||(f - beta)_+||_{g*}
    (norm under the empirical uniform distribution)."""
    gstar = gamma_conjugate(gamma)
    hinge = np.maximum(inst.scores - beta, 0.0)
    return float(beta + c_gamma(inst.eta, gamma) * np.mean(hinge**gstar) ** (1.0 / gstar))


def dual_lagrangian(inst: DroInstance, gamma, lam, rho):
    """Two-multiplier dual  lam * eta + rho + lam * E[phi*((f - rho)/lam)]."""
    if lam <= 0.0:
        # limit lam -> 0: lam * phi*((f - rho)/lam) -> (f - rho)_+ * inf unless
        # all scores are below rho; only that branch is meaningful here
        hinge = np.maximum(inst.scores - rho, 0.0)
        if np.all(hinge == 0.0):
            return float(rho)
        return math.inf
    x = (inst.scores - rho) / lam
    return float(lam * inst.eta + rho + lam * np.mean(phi_conjugate(x, gamma)))


def lambda_star(inst: DroInstance, gamma, beta):
    """Optimal multiplier for a fixed margin:
    lam* = (g-1) (g (g-1) eta + 1)^{-1/g*} E[(f - beta)_+^{g*}]^{1/g*}."""
    gstar = gamma_conjugate(gamma)
    hinge = np.maximum(inst.scores - beta, 0.0)
    moment = np.mean(hinge**gstar) ** (1.0 / gstar)
    scale = (gamma * (gamma - 1.0) * inst.eta + 1.0) ** (-1.0 / gstar)
    return float((gamma - 1.0) * scale * moment)


def _expand_bracket(fn, lo, hi, max_doublings=40):
    """Push the lower bracket edge down while the function is still strictly
    decreasing there; for small radii the margin minimizer sits far below
    min(scores)."""
    width = hi - lo
    probe = max(width * 1e-3, 1e-9)
    for _ in range(max_doublings):
        if fn(lo) >= fn(lo + probe) - 1e-14:
            break
        lo -= width
        width *= 2.0
    return lo


def solve_beta(inst: DroInstance, gamma, tol=1e-8, oracle_seed=0) -> DualCertificate:
    """Golden-section minimization of the dual over the margin, plus the
    multiplier certificate and a brute-force primal value."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    fn = lambda b: dual_value(inst, gamma, b)
    hi = float(np.max(inst.scores))
    lo = _expand_bracket(fn, float(np.min(inst.scores)) - 1.0, hi)
    beta_star, value = golden_section(fn, lo, hi, tol)
    lam = lambda_star(inst, gamma, beta_star)
    primal = inner_max_bruteforce(inst, DivergenceKind.cressie_read(gamma), seed=oracle_seed)
    return DualCertificate(beta_star, lam, value, primal.value)


def minimize_beta_objective(neg_scores, gamma_star, c, eps=0.0, tol=1e-8):
    """Minimize the practical margin objective
    beta + (mean [c (f - beta)_+ + eps]^{g*})^{1/g*}  over beta.

    Handles gamma_star = 1 (the CCL-limit objective) as well.
    """
    scores = np.asarray(neg_scores, dtype=float)
    lo = float(scores.min()) - 1.0
    hi = float(scores.max())

    def objective(beta):
        hinge = np.maximum(scores - beta, 0.0)
        return beta + np.mean((c * hinge + eps) ** gamma_star) ** (1.0 / gamma_star)

    lo = _expand_bracket(objective, lo, hi)
    beta, value = golden_section(objective, lo, hi, tol)
    return beta, value


def verify_ccl_ball_equivalence(inst: DroInstance, alpha, tol_beta=1e-10):
    """Compare the worst-case-regret ball value (radius log alpha) against the
    margin-form dual  min_beta { beta + alpha * mean (f - beta)_+ }."""
    if alpha < 1:
        raise ValueError("alpha must be at least 1")
    scores = inst.scores
    wr_inst = DroInstance(scores, math.log(alpha))
    primal = inner_max_bruteforce(wr_inst, DivergenceKind.worst_regret())

    def ccl_dual(beta):
        return beta + alpha * np.mean(np.maximum(scores - beta, 0.0))

    hi = float(scores.max())
    lo = _expand_bracket(ccl_dual, float(scores.min()) - 1.0, hi)
    beta, dual = golden_section(ccl_dual, lo, hi, tol_beta)
    return {
        "alpha": float(alpha),
        "primal": primal.value,
        "dual": float(dual),
        "beta": float(beta),
        "gap": abs(primal.value - dual),
    }


def verify_kl_limit(inst: DroInstance, gamma_near_1, seed=0):
    """Compare Cressie-Read and KL brute-force values at equal radius; the
    Cressie-Read family approaches KL as gamma -> 1."""
    if not (1.0 < gamma_near_1 <= 1.01):
        raise ValueError("gamma_near_1 must lie in (1, 1.01]")
    cr = inner_max_bruteforce(inst, DivergenceKind.cressie_read(gamma_near_1), seed=seed)
    kl = inner_max_bruteforce(inst, DivergenceKind.kl(), seed=seed)
    denom = max(abs(kl.value), 1e-12)
    return {
        "gamma": float(gamma_near_1),
        "cressie_read": cr.value,
        "kl": kl.value,
        "relative_gap": abs(cr.value - kl.value) / denom,
    }
