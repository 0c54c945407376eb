"""Numerically stable primitives shared by every other module.

All functions operate on float64 arrays: logits are (n, k) matrices with
k >= 2 classes, labels are length-n integer vectors with values in [0, k).
Argmax ties are always broken toward the lowest class index so that repeated
runs are reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

# Probabilities are floored at this value before any log so saturated rows
# cannot produce -inf; the floor sits well below every stated tolerance.
PROB_FLOOR = 1e-12


def as_logit_matrix(z) -> np.ndarray:
    """Validate and return `z` as an (n, k) float64 logit matrix."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise InvalidInputError(f"logits must be a 2-d matrix, got shape {z.shape}")
    n, k = z.shape
    if n < 1 or k < 2:
        raise InvalidInputError(f"logits need n >= 1 samples and k >= 2 classes, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits contain NaN or Inf entries")
    return z


def as_label_vector(y, k: int) -> np.ndarray:
    """Validate and return `y` as a length-n int64 label vector in [0, k)."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise InvalidInputError(f"labels must be a 1-d vector, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        rounded = np.asarray(y, dtype=np.float64)
        if not np.all(rounded == np.floor(rounded)):
            raise InvalidInputError("labels must be integers")
        y = rounded.astype(np.int64)
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= k):
        raise InvalidInputError(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")
    return y


def validate_probability_matrix(p) -> np.ndarray:
    """Check that `p` is row-stochastic within 1e-12 and return it as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise InvalidInputError(f"probabilities must be a 2-d matrix, got shape {p.shape}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    if not np.allclose(p.sum(axis=1), 1.0, rtol=0.0, atol=1e-12):
        raise InvalidInputError("probability rows must sum to 1 within 1e-12")
    return p


def softmax(z) -> np.ndarray:
    """Row-wise softmax computed with max-subtraction for stability."""
    z = as_logit_matrix(z)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(z) -> np.ndarray:
    """Row-wise log-softmax, z - logsumexp(z), without overflow."""
    z = as_logit_matrix(z)
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def confidence_and_prediction(p) -> tuple[np.ndarray, np.ndarray]:
    """Per-row maximum probability and its class index (ties to lowest index)."""
    p = validate_probability_matrix(p)
    pred = p.argmax(axis=1)
    conf = p[np.arange(p.shape[0]), pred]
    return conf, pred


def row_entropy(p) -> np.ndarray:
    """Per-row Shannon entropy in nats, with 0*log(0) taken as 0."""
    p = validate_probability_matrix(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return np.maximum(-terms.sum(axis=1), 0.0)
