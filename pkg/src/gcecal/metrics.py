"""Calibration and discrimination metrics.

Expected calibration error uses equal-width confidence bins, its adaptive
variant uses equal-mass (quantile) groups, and the classwise variant averages
a one-vs-rest calibration error over classes.  Equal-width bins are half-open
[lo, hi) with the top bin closed at 1.0, so every confidence in [0, 1] lands
in exactly one bin; empty bins carry zero weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError
from .numerics import (
    PROB_FLOOR,
    as_label_vector,
    as_logit_matrix,
    confidence_and_prediction,
    log_softmax,
    softmax,
    validate_probability_matrix,
)


class BinMode(str, Enum):
    EQUAL_WIDTH = "equal_width"
    EQUAL_MASS = "equal_mass"


@dataclass(frozen=True)
class ReliabilityBins:
    """Per-bin reliability statistics behind a calibration error value."""

    mode: BinMode
    m: int
    counts: np.ndarray  # samples per bin, sums to n
    conf: np.ndarray    # mean confidence per bin (0 for empty bins)
    acc: np.ndarray     # accuracy per bin (0 for empty bins)
    lo: np.ndarray      # lower confidence edge per bin
    hi: np.ndarray      # upper confidence edge per bin

    def rows(self) -> list[dict]:
        return [
            {
                "lo": float(self.lo[i]),
                "hi": float(self.hi[i]),
                "count": int(self.counts[i]),
                "conf": float(self.conf[i]),
                "acc": float(self.acc[i]),
            }
            for i in range(len(self.counts))
        ]


@dataclass(frozen=True)
class CalibrationReport:
    """Error rate, NLL, and the three calibration errors for one logit set."""

    error_rate: float
    nll: float
    ece: float
    ada_ece: float
    classwise_ece: float
    bins: ReliabilityBins
    n: int
    k: int
    m: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "bins": self.m,
            "error_rate": self.error_rate,
            "nll": self.nll,
            "ece": self.ece,
            "ada_ece": self.ada_ece,
            "classwise_ece": self.classwise_ece,
            "reliability": self.bins.rows(),
        }


def _equal_width_index(conf: np.ndarray, m: int) -> np.ndarray:
    """Bin index in [0, m) for each confidence; top bin closed at 1.0."""
    idx = np.floor(conf * m).astype(np.int64)
    return np.clip(idx, 0, m - 1)


def _gap_value(counts, conf_sums, hit_sums, n):
    nonempty = counts > 0
    conf_mean = np.zeros(len(counts))
    acc_mean = np.zeros(len(counts))
    conf_mean[nonempty] = conf_sums[nonempty] / counts[nonempty]
    acc_mean[nonempty] = hit_sums[nonempty] / counts[nonempty]
    value = float((counts / n * np.abs(conf_mean - acc_mean)).sum())
    return value, conf_mean, acc_mean


def ece(p, y, m: int) -> tuple[float, ReliabilityBins]:
    """Expected calibration error over m equal-width confidence bins."""
    if m < 1:
        raise InvalidInputError(f"bin count must be >= 1, got {m}")
    p = validate_probability_matrix(p)
    y = as_label_vector(y, p.shape[1])
    n = p.shape[0]
    conf, pred = confidence_and_prediction(p)
    hits = (pred == y).astype(np.float64)
    idx = _equal_width_index(conf, m)

    counts = np.bincount(idx, minlength=m).astype(np.int64)
    conf_sums = np.bincount(idx, weights=conf, minlength=m)
    hit_sums = np.bincount(idx, weights=hits, minlength=m)
    value, conf_mean, acc_mean = _gap_value(counts, conf_sums, hit_sums, n)
    edges = np.linspace(0.0, 1.0, m + 1)
    bins = ReliabilityBins(BinMode.EQUAL_WIDTH, m, counts, conf_mean, acc_mean, edges[:-1], edges[1:])
    return value, bins


def ada_ece(p, y, m: int) -> tuple[float, ReliabilityBins]:
    """Calibration error over m equal-mass groups of confidence-sorted samples.

    Samples are sorted by (confidence, index) and split into m contiguous
    groups whose sizes differ by at most one (the first n mod m groups take
    the extra sample).
    """
    if m < 1:
        raise InvalidInputError(f"bin count must be >= 1, got {m}")
    p = validate_probability_matrix(p)
    y = as_label_vector(y, p.shape[1])
    n = p.shape[0]
    if n < m:
        raise InvalidInputError(f"equal-mass binning needs n >= m, got n={n}, m={m}")
    conf, pred = confidence_and_prediction(p)
    hits = (pred == y).astype(np.float64)
    order = np.argsort(conf, kind="stable")

    counts = np.zeros(m, dtype=np.int64)
    conf_mean = np.zeros(m)
    acc_mean = np.zeros(m)
    lo = np.zeros(m)
    hi = np.zeros(m)
    value = 0.0
    for b, group in enumerate(np.array_split(order, m)):
        counts[b] = group.size
        conf_mean[b] = conf[group].mean()
        acc_mean[b] = hits[group].mean()
        lo[b] = conf[group].min()
        hi[b] = conf[group].max()
        value += group.size / n * abs(conf_mean[b] - acc_mean[b])
    bins = ReliabilityBins(BinMode.EQUAL_MASS, m, counts, conf_mean, acc_mean, lo, hi)
    return float(value), bins


def classwise_ece(p, y, m: int) -> float:
    """Mean over classes of the one-vs-rest calibration error of each class's
    predicted probability, binned equal-width."""
    if m < 1:
        raise InvalidInputError(f"bin count must be >= 1, got {m}")
    p = validate_probability_matrix(p)
    y = as_label_vector(y, p.shape[1])
    n, k = p.shape
    total = 0.0
    for c in range(k):
        scores = p[:, c]
        member = (y == c).astype(np.float64)
        idx = _equal_width_index(scores, m)
        counts = np.bincount(idx, minlength=m)
        score_sums = np.bincount(idx, weights=scores, minlength=m)
        freq_sums = np.bincount(idx, weights=member, minlength=m)
        value, _, _ = _gap_value(counts, score_sums, freq_sums, n)
        total += value
    return total / k


def _tied_ranks(x: np.ndarray) -> np.ndarray:
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1])) + 1
    return (starts + (counts - 1) / 2.0)[inverse]


def auroc(scores_in, scores_out) -> float:
    """P(out-score > in-score) + 0.5 P(tie), via the rank-sum identity.

    Scores follow the entropy convention: higher means more out-of-
    distribution.
    """
    scores_in = np.asarray(scores_in, dtype=np.float64).ravel()
    scores_out = np.asarray(scores_out, dtype=np.float64).ravel()
    if scores_in.size == 0 or scores_out.size == 0:
        raise InvalidInputError("both score vectors must be nonempty")
    ranks = _tied_ranks(np.concatenate([scores_in, scores_out]))
    n_in, n_out = scores_in.size, scores_out.size
    u = ranks[n_in:].sum() - n_out * (n_out + 1) / 2.0
    return float(u / (n_in * n_out))


def nll(p, y) -> float:
    """Mean negative log-likelihood of the labels under the probabilities."""
    p = validate_probability_matrix(p)
    y = as_label_vector(y, p.shape[1])
    pt = np.maximum(p[np.arange(p.shape[0]), y], PROB_FLOOR)
    return float(-np.log(pt).mean())


def _assemble_report(p, y, nll_value: float, m: int) -> CalibrationReport:
    _, pred = confidence_and_prediction(p)
    error_rate = float(1.0 - (pred == y).mean())
    ece_value, bins = ece(p, y, m)
    ada_value, _ = ada_ece(p, y, m)
    cw_value = classwise_ece(p, y, m)
    return CalibrationReport(
        error_rate=error_rate,
        nll=nll_value,
        ece=ece_value,
        ada_ece=ada_value,
        classwise_ece=cw_value,
        bins=bins,
        n=p.shape[0],
        k=p.shape[1],
        m=m,
    )


def evaluate(z, y, m: int = 20) -> CalibrationReport:
    """Assemble error rate, NLL, and all three calibration errors in one pass."""
    z = as_logit_matrix(z)
    y = as_label_vector(y, z.shape[1])
    if y.shape[0] != z.shape[0]:
        raise InvalidInputError(f"got {z.shape[0]} logit rows but {y.shape[0]} labels")
    nll_value = float(-log_softmax(z)[np.arange(z.shape[0]), y].mean())
    return _assemble_report(softmax(z), y, nll_value, m)


def evaluate_probabilities(p, y, m: int = 20) -> CalibrationReport:
    """Like evaluate, but for probabilities that are already normalized
    (e.g. the output of a calibrator)."""
    p = validate_probability_matrix(p)
    y = as_label_vector(y, p.shape[1])
    if y.shape[0] != p.shape[0]:
        raise InvalidInputError(f"got {p.shape[0]} probability rows but {y.shape[0]} labels")
    return _assemble_report(p, y, nll(p, y), m)
