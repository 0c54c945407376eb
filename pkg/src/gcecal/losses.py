"""Training losses with analytic logit gradients, plus a properness checker.

Every loss returns ``(loss, grad)`` where ``loss`` is the nonnegative mean
objective over the batch and ``grad`` is its exact gradient with respect to
the logits.  The generative cross-entropy family couples samples through the
per-batch aggregated class confidence, so its gradient flows through both the
per-sample softmax and the batch-level normalizer; nothing is treated as a
stopped constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError
from .numerics import PROB_FLOOR, as_label_vector, as_logit_matrix, log_softmax, softmax, validate_probability_matrix


class LossKind(str, Enum):
    CE = "ce"
    GCE = "gce"
    GCE_LS = "gce_ls"
    FOCAL = "focal"
    FOCAL_GCE = "focal_gce"
    BRIER = "brier"


@dataclass(frozen=True)
class LossSpec:
    """A loss kind with its hyperparameters.

    ``alpha`` is the label-smoothing weight (GCE_LS only) and ``gamma`` the
    focusing exponent (FOCAL and FOCAL_GCE only); both default to 0 and are
    ignored by kinds that do not use them.
    """

    kind: LossKind
    alpha: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidInputError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.gamma < 0.0:
            raise InvalidInputError(f"gamma must be >= 0, got {self.gamma}")


def class_counts(y: np.ndarray, k: int) -> np.ndarray:
    """Number of batch samples per class (length-k, sums to n)."""
    y = as_label_vector(y, k)
    return np.bincount(y, minlength=k).astype(np.int64)


def aggregated_confidence(p: np.ndarray) -> np.ndarray:
    """Column sums of a probability matrix: total confidence assigned per class."""
    return validate_probability_matrix(p).sum(axis=0)


def _check_pair(z, y):
    z = as_logit_matrix(z)
    y = as_label_vector(y, z.shape[1])
    if y.shape[0] != z.shape[0]:
        raise InvalidInputError(f"got {z.shape[0]} logit rows but {y.shape[0]} labels")
    return z, y


def _grad_through_softmax(p: np.ndarray, dldp: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. probabilities through the row-wise softmax."""
    inner = (dldp * p).sum(axis=1, keepdims=True)
    return p * (dldp - inner)


def cross_entropy(z, y) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its logit gradient (softmax - onehot)/n."""
    z, y = _check_pair(z, y)
    n = z.shape[0]
    logp = log_softmax(z)
    loss = -logp[np.arange(n), y].mean()
    grad = softmax(z)
    grad[np.arange(n), y] -= 1.0
    return float(loss), grad / n


def gce(z, y) -> tuple[float, np.ndarray]:
    """Generative cross-entropy over one mini-batch.

    The per-sample log-ratio penalizes the true-class probability relative to
    the batch total of that class, which is cross-entropy plus a class-level
    confidence regularizer weighted by the per-batch class counts.
    """
    z, y = _check_pair(z, y)
    n, k = z.shape
    p = softmax(z)
    logp = log_softmax(z)
    col = p.sum(axis=0)
    counts = np.bincount(y, minlength=k)

    idx = np.arange(n)
    loss = -(logp[idx, y] - np.log(np.maximum(col[y], PROB_FLOOR))).mean()

    grad = p.copy()
    grad[idx, y] -= 1.0
    grad /= n
    # batch-coupled regularizer term, chained through each row's softmax
    w = counts / (n * np.maximum(col, PROB_FLOOR))
    grad += _grad_through_softmax(p, np.broadcast_to(w, p.shape))
    return float(loss), grad


def gce_label_smoothed(z, y, alpha: float) -> tuple[float, np.ndarray]:
    """Generative cross-entropy blended with its uniform-target counterpart."""
    if not 0.0 <= alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in [0, 1), got {alpha}")
    z, y = _check_pair(z, y)
    n, k = z.shape
    base_loss, base_grad = gce(z, y)
    if alpha == 0.0:
        return base_loss, base_grad

    p = softmax(z)
    logp = log_softmax(z)
    col = np.maximum(p.sum(axis=0), PROB_FLOOR)
    smooth_loss = -(logp - np.log(col)).sum() / (n * k)
    smooth_grad = (p - 1.0 / k) / n
    smooth_grad += _grad_through_softmax(p, np.broadcast_to(1.0 / (k * col), p.shape))

    loss = (1.0 - alpha) * base_loss + alpha * smooth_loss
    grad = (1.0 - alpha) * base_grad + alpha * smooth_grad
    return float(loss), grad


def _focal_weight_terms(pt: np.ndarray, log_pt: np.ndarray, gamma: float):
    """d/dp of (1-p)^gamma * log p, split into its two addends with 0-limits."""
    t = 1.0 - pt
    with np.errstate(divide="ignore", invalid="ignore"):
        mod = np.power(t, gamma) / np.maximum(pt, PROB_FLOOR)
        if gamma == 0.0:
            bend = np.zeros_like(pt)
        else:
            bend = np.where(t > 0.0, gamma * np.power(t, gamma - 1.0) * log_pt, 0.0)
    return mod, bend


def focal(z, y, gamma: float) -> tuple[float, np.ndarray]:
    """Focal loss: cross-entropy with easy samples down-weighted by (1-p)^gamma."""
    if gamma < 0.0:
        raise InvalidInputError(f"gamma must be >= 0, got {gamma}")
    z, y = _check_pair(z, y)
    n = z.shape[0]
    p = softmax(z)
    idx = np.arange(n)
    pt = p[idx, y]
    log_pt = log_softmax(z)[idx, y]
    t = 1.0 - pt

    loss = -(np.power(t, gamma) * log_pt).mean()
    mod, bend = _focal_weight_terms(pt, log_pt, gamma)
    g = -(mod - bend) / n  # dL/dp_y per sample
    gp = g * pt
    grad = -gp[:, None] * p
    grad[idx, y] += gp
    return float(loss), grad


def focal_gce(z, y, gamma: float) -> tuple[float, np.ndarray]:
    """Generative cross-entropy with per-sample focal modulation inside the sum."""
    if gamma < 0.0:
        raise InvalidInputError(f"gamma must be >= 0, got {gamma}")
    z, y = _check_pair(z, y)
    n, k = z.shape
    p = softmax(z)
    logp = log_softmax(z)
    col = np.maximum(p.sum(axis=0), PROB_FLOOR)
    idx = np.arange(n)
    pt = p[idx, y]
    t = 1.0 - pt
    ratio = logp[idx, y] - np.log(col[y])

    tg = np.power(t, gamma)
    loss = -(tg * ratio).mean()

    with np.errstate(divide="ignore", invalid="ignore"):
        if gamma == 0.0:
            bend = np.zeros(n)
        else:
            bend = np.where(t > 0.0, gamma * np.power(t, gamma - 1.0) * ratio, 0.0)
    own = -(-bend + tg / np.maximum(pt, PROB_FLOOR)) / n

    # aggregated-confidence channel: every sample of class k leans on col[k]
    weight_sums = np.zeros(k)
    np.add.at(weight_sums, y, tg)
    dldp = np.broadcast_to(weight_sums / (n * col), p.shape).copy()
    dldp[idx, y] += own
    return float(loss), _grad_through_softmax(p, dldp)


def brier(z, y) -> tuple[float, np.ndarray]:
    """Mean squared error between softmax probabilities and one-hot targets."""
    z, y = _check_pair(z, y)
    n = z.shape[0]
    p = softmax(z)
    q = np.zeros_like(p)
    q[np.arange(n), y] = 1.0
    diff = p - q
    loss = (diff * diff).sum() / n
    return float(loss), _grad_through_softmax(p, 2.0 * diff / n)


def loss_and_grad(z, y, spec: LossSpec) -> tuple[float, np.ndarray]:
    """Dispatch on the loss kind; the uniform entry point used by the trainer."""
    kind = LossKind(spec.kind)
    if kind is LossKind.CE:
        return cross_entropy(z, y)
    if kind is LossKind.GCE:
        return gce(z, y)
    if kind is LossKind.GCE_LS:
        return gce_label_smoothed(z, y, spec.alpha)
    if kind is LossKind.FOCAL:
        return focal(z, y, spec.gamma)
    if kind is LossKind.FOCAL_GCE:
        return focal_gce(z, y, spec.gamma)
    if kind is LossKind.BRIER:
        return brier(z, y)
    raise InvalidInputError(f"unsupported loss kind {spec.kind!r}")


def gce_prob_gradient(p, y) -> np.ndarray:
    """Diagnostic partial derivative of the GCE objective w.r.t. each sample's
    true-class probability, holding all other entries fixed.

    Zero everywhere exactly when the probabilities are one-hot at the labels.
    """
    p = validate_probability_matrix(p)
    y = as_label_vector(y, p.shape[1])
    idx = np.arange(p.shape[0])
    pt = p[idx, y]
    if np.any(pt == 0.0):
        raise ZeroDivisionError("true-class probability is 0 for some sample")
    counts = np.bincount(y, minlength=p.shape[1])
    col = p.sum(axis=0)
    return -1.0 / pt + counts[y] / col[y]


# ---------------------------------------------------------------------------
# Numerical strict-properness verification
# ---------------------------------------------------------------------------


def project_rows_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    n, k = v.shape
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    j = np.arange(1, k + 1)
    cond = u - css / j > 0.0
    rho = k - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(n), rho] / (rho + 1.0)
    return np.maximum(v - theta[:, None], 0.0)


def _conditional_risk_and_grad(p: np.ndarray, q: np.ndarray, kind: LossKind, gamma: float):
    pc = np.maximum(p, PROB_FLOOR)
    logp = np.log(pc)
    if kind is LossKind.CE:
        return -(q * logp).sum(), -q / pc
    if kind is LossKind.GCE:
        col = np.maximum(p.sum(axis=0), PROB_FLOOR)
        nk = q.sum(axis=0)
        risk = -(q * (logp - np.log(col))).sum()
        return risk, -q / pc + nk / col
    if kind is LossKind.FOCAL:
        t = np.maximum(1.0 - p, 0.0)
        mod, bend = _focal_weight_terms(pc, logp, gamma)
        risk = -(q * np.power(t, gamma) * logp).sum()
        return risk, q * (bend - mod)
    raise InvalidInputError(f"properness check supports CE, GCE, FOCAL; got {kind}")


def verify_strict_properness(
    q,
    kind: LossKind | str,
    gamma: float = 2.0,
    max_iters: int = 100_000,
    risk_tol: float = 1e-14,
) -> tuple[np.ndarray, float]:
    """Minimize the conditional batch risk over the product of simplices and
    report how far the minimizer lands from the target distributions.

    Monotone projected gradient descent from the uniform start: each
    iteration backtracks (halving the step, growing it again after success,
    never above 0.5) until strict descent, and stops at projected
    stationarity or when the risk change drops below ``risk_tol``.  For
    strictly proper losses the minimizer coincides with the target up to
    optimizer accuracy; a deviation that stays large is evidence the loss is
    not strictly proper.

    Parameters
    ----------
    q : (n, k) array of target distributions, one per row; the stacked rows
        must be numerically full-rank (smallest singular value > 1e-8).
    kind : CE, GCE, or FOCAL.
    gamma : focusing exponent, used by FOCAL only.

    Returns
    -------
    (minimizer, max_deviation) where max_deviation = max|minimizer - q|.
    """
    q = validate_probability_matrix(q)
    kind = LossKind(kind)
    n, k = q.shape
    if n > 8 or k > 4:
        raise InvalidInputError(f"desk-scale check requires n <= 8 and k <= 4, got {q.shape}")
    if np.linalg.svd(q, compute_uv=False).min() <= 1e-8:
        raise InvalidInputError("target matrix is numerically rank-deficient")

    p = np.full_like(q, 1.0 / k)
    risk, grad = _conditional_risk_and_grad(p, q, kind, gamma)
    eta = 0.5
    for _ in range(max_iters):
        cand_risk = np.inf
        cand = cand_grad = None
        for _ in range(60):
            cand = project_rows_to_simplex(p - eta * grad)
            cand_risk, cand_grad = _conditional_risk_and_grad(cand, q, kind, gamma)
            if cand_risk < risk:
                break
            eta *= 0.5
        if not cand_risk < risk or risk - cand_risk < risk_tol:
            break
        p, risk, grad = cand, cand_risk, cand_grad
        eta = min(2.0 * eta, 0.5)
    return p, float(np.abs(p - q).max())
