"""Post-hoc calibrators that rescale logits without changing predictions.

Two fitting strategies: a single global temperature chosen by NLL
minimization, and per-confidence-bin temperatures updated round by round with
a clipped confidence-accuracy-gap rule, keeping the vector that achieves the
best validation calibration error.  Both leave every argmax unchanged, so
accuracy is identical before and after.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .metrics import ece
from .numerics import as_label_vector, as_logit_matrix, confidence_and_prediction, log_softmax, softmax


@dataclass(frozen=True)
class AtsConfig:
    """Hyperparameters of the adaptive per-bin temperature fit."""

    bins: int = 15
    alpha: float = 0.05
    t_min: float = 0.1
    t_max: float = 10.0
    rounds: int = 200
    delta_clip: float = 0.1
    selection_bins: int = 20  # equal-width bins of the keep-best ECE metric

    def __post_init__(self):
        if self.bins < 1:
            raise InvalidInputError(f"bins must be >= 1, got {self.bins}")
        if self.alpha <= 0.0:
            raise InvalidInputError(f"alpha must be > 0, got {self.alpha}")
        if not 0.0 < self.t_min <= 1.0 <= self.t_max:
            raise InvalidInputError(f"need 0 < t_min <= 1 <= t_max, got [{self.t_min}, {self.t_max}]")
        if self.rounds < 1:
            raise InvalidInputError(f"rounds must be >= 1, got {self.rounds}")
        if self.delta_clip <= 0.0 or self.selection_bins < 1:
            raise InvalidInputError("delta_clip must be > 0 and selection_bins >= 1")

    def to_dict(self) -> dict:
        return {
            "bins": self.bins,
            "alpha": self.alpha,
            "t_min": self.t_min,
            "t_max": self.t_max,
            "rounds": self.rounds,
            "delta_clip": self.delta_clip,
            "selection_bins": self.selection_bins,
        }


@dataclass(frozen=True)
class BinPartition:
    """Quantile thresholds and the per-sample bin assignment they induce.

    Thresholds are strictly increasing after de-duplication, start at 0 and
    end at 1; a confidence c lands in bin b when thresholds[b] <= c <
    thresholds[b+1], with the top bin closed at 1.
    """

    thresholds: np.ndarray
    assignments: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.thresholds) - 1


@dataclass(frozen=True)
class TemperatureVector:
    """Per-bin temperatures, each confined to [t_min, t_max]."""

    temps: np.ndarray
    t_min: float
    t_max: float

    def __post_init__(self):
        if not self.t_min > 0.0:
            raise InvalidInputError(f"t_min must be > 0, got {self.t_min}")
        if np.any(self.temps < self.t_min) or np.any(self.temps > self.t_max):
            raise InvalidInputError("temperatures outside [t_min, t_max]")


def apply_temperature(z, t: float) -> np.ndarray:
    """softmax(z / t); t > 1 softens rows, t < 1 sharpens, argmax unchanged."""
    if not t > 0.0:
        raise InvalidInputError(f"temperature must be > 0, got {t}")
    return softmax(as_logit_matrix(z) / t)


def _nll_at(z, y, t: float) -> float:
    logp = log_softmax(z / t)
    return float(-logp[np.arange(z.shape[0]), y].mean())


def fit_global_temperature(z_val, y_val, t_lo: float = 0.1, t_hi: float = 10.0) -> float:
    """Temperature in [t_lo, t_hi] minimizing validation NLL, by golden section.

    The returned temperature is never worse (in NLL) than t = 1.
    """
    z = as_logit_matrix(z_val)
    y = as_label_vector(y_val, z.shape[1])
    if y.shape[0] != z.shape[0]:
        raise InvalidInputError(f"got {z.shape[0]} logit rows but {y.shape[0]} labels")

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = t_lo, t_hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = _nll_at(z, y, c), _nll_at(z, y, d)
    while b - a > 1e-4:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _nll_at(z, y, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _nll_at(z, y, d)
    t_star = 0.5 * (a + b)
    # golden section assumes unimodality; fall back to the identity scaling
    # whenever the located optimum does not actually beat it
    if t_lo <= 1.0 <= t_hi and _nll_at(z, y, 1.0) < _nll_at(z, y, t_star):
        return 1.0
    return float(t_star)


def bucketize(conf: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Bin index of each confidence against ascending thresholds (top closed)."""
    idx = np.searchsorted(thresholds, conf, side="right") - 1
    return np.clip(idx, 0, len(thresholds) - 2)


def quantile_thresholds(conf: np.ndarray, m: int) -> np.ndarray:
    """Empirical quantiles of the confidences at levels j/m, forced to start
    at 0 and end at 1, with duplicate thresholds merged."""
    levels = np.linspace(0.0, 1.0, m + 1)
    qs = np.quantile(conf, levels)
    qs[0], qs[-1] = 0.0, 1.0
    return np.unique(qs)


def fit_ats(z_val, y_val, cfg: AtsConfig = AtsConfig()) -> tuple[TemperatureVector, BinPartition]:
    """Fit per-bin temperatures on validation logits.

    Bins come from confidence quantiles at t = 1 and stay fixed.  Each round
    sweeps the bins from highest to lowest: the bin's confidence and accuracy
    are recomputed on its rescaled logits and the temperature moves by the
    clipped gap alpha*(conf - acc).  After every round (and once up front, so
    the all-ones vector is always a candidate) the full validation ECE under
    per-sample temperatures is scored and the best vector is kept.
    """
    z = as_logit_matrix(z_val)
    y = as_label_vector(y_val, z.shape[1])
    if y.shape[0] != z.shape[0]:
        raise InvalidInputError(f"got {z.shape[0]} logit rows but {y.shape[0]} labels")

    conf, _ = confidence_and_prediction(softmax(z))
    thresholds = quantile_thresholds(conf, cfg.bins)
    assignments = bucketize(conf, thresholds)
    n_bins = len(thresholds) - 1
    members = [np.flatnonzero(assignments == m) for m in range(n_bins)]

    def selection_ece(temps: np.ndarray) -> float:
        probs = softmax(z / temps[assignments][:, None])
        return ece(probs, y, cfg.selection_bins)[0]

    temps = np.ones(n_bins)
    best = temps.copy()
    best_ece = selection_ece(temps)
    for _ in range(cfg.rounds):
        for m in range(n_bins - 1, -1, -1):
            idx = members[m]
            if idx.size == 0:
                continue
            p_bin = softmax(z[idx] / temps[m])
            c_bin, pred_bin = confidence_and_prediction(p_bin)
            c_m = c_bin.mean()
            a_m = (pred_bin == y[idx]).mean()
            delta = np.clip(cfg.alpha * (c_m - a_m), -cfg.delta_clip, cfg.delta_clip)
            temps[m] = np.clip(temps[m] + delta, cfg.t_min, cfg.t_max)
        round_ece = selection_ece(temps)
        if round_ece < best_ece:
            best_ece = round_ece
            best = temps.copy()
    return TemperatureVector(best, cfg.t_min, cfg.t_max), BinPartition(thresholds, assignments)


def apply_ats(z, temps: TemperatureVector | np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Rescale each row by the temperature of the bin its uncalibrated
    confidence falls into, then softmax.  Predictions are unchanged."""
    z = as_logit_matrix(z)
    t = temps.temps if isinstance(temps, TemperatureVector) else np.asarray(temps, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if len(t) != len(thresholds) - 1:
        raise InvalidInputError(
            f"{len(t)} temperatures do not match {len(thresholds)} thresholds"
        )
    conf, _ = confidence_and_prediction(softmax(z))
    per_sample = t[bucketize(conf, thresholds)]
    return softmax(z / per_sample[:, None])


@dataclass(frozen=True)
class Calibrator:
    """A fitted post-hoc calibrator, serializable and re-applicable later.

    ``method`` is "ts" (one global temperature) or "ats" (per-bin
    temperatures with their confidence thresholds).
    """

    method: str
    temperatures: np.ndarray
    thresholds: np.ndarray | None = None
    config: AtsConfig | None = None

    def apply(self, z) -> np.ndarray:
        if self.method == "ts":
            return apply_temperature(z, float(self.temperatures[0]))
        return apply_ats(z, self.temperatures, self.thresholds)

    def describe(self) -> str:
        if self.method == "ts":
            return f"ts(t={float(self.temperatures[0]):.4f})"
        return f"ats(bins={len(self.temperatures)})"

    def to_dict(self) -> dict:
        if self.method == "ts":
            return {"method": "ts", "temperature": float(self.temperatures[0])}
        return {
            "method": "ats",
            "thresholds": [float(v) for v in self.thresholds],
            "temperatures": [float(v) for v in self.temperatures],
            "config": self.config.to_dict() if self.config else AtsConfig().to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Calibrator":
        method = d.get("method")
        if method == "ts":
            t = float(d["temperature"])
            if t <= 0.0:
                raise InvalidInputError(f"temperature must be > 0, got {t}")
            return cls(method="ts", temperatures=np.array([t]))
        if method == "ats":
            thresholds = np.asarray(d["thresholds"], dtype=np.float64)
            temps = np.asarray(d["temperatures"], dtype=np.float64)
            if len(temps) != len(thresholds) - 1:
                raise InvalidInputError("temperature/threshold lengths are inconsistent")
            cfg = AtsConfig(**d["config"]) if "config" in d else AtsConfig()
            return cls(method="ats", temperatures=temps, thresholds=thresholds, config=cfg)
        raise InvalidInputError(f"unknown calibrator method {method!r}")
