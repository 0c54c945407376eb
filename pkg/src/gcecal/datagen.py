"""Synthetic Gaussian-mixture data with closed-form posteriors.

Every generator draws from a named Philox (counter-based) stream keyed by
(seed, purpose, index), so per-class and per-split sampling is independent of
iteration order and bitwise reproducible across runs.  Long-tailed
subsampling thins the training split class by class with an exponential
profile; distribution shift adds isotropic Gaussian feature noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import InvalidInputError

_U64 = (1 << 64) - 1

# purpose codes of the (seed, purpose, index) stream-splitting rule
_LABELS = 1
_FEATURES = 2
_LONGTAIL = 3
_SHIFT = 4
_VAL_CARVE = 5


def substream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Independent 64-bit counter-based generator for (seed, purpose, index)."""
    key = (int(seed) & _U64) << 64 | (int(purpose) & 0xFFFFFFFF) << 32 | (int(index) & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))


class Split(IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Isotropic Gaussian class-conditionals with known priors.

    ``means`` is (k, d); ``variance`` is the shared isotropic variance;
    ``priors`` must be a length-k simplex vector.
    """

    means: np.ndarray
    variance: float
    priors: np.ndarray
    seed: int

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        priors = np.asarray(self.priors, dtype=np.float64)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "priors", priors)
        if means.ndim != 2 or means.shape[0] < 2:
            raise InvalidInputError(f"means must be (k>=2, d), got {means.shape}")
        if not self.variance > 0.0:
            raise InvalidInputError(f"variance must be > 0, got {self.variance}")
        if priors.shape != (means.shape[0],) or np.any(priors < 0.0):
            raise InvalidInputError("priors must be a nonnegative length-k vector")
        if abs(priors.sum() - 1.0) > 1e-12:
            raise InvalidInputError("priors must sum to 1 within 1e-12")

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]


def circle_means(k: int, radius: float) -> np.ndarray:
    """k class means equally spaced on a circle of the given radius (d = 2)."""
    angles = 2.0 * np.pi * np.arange(k) / k
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray    # (n,) int64
    splits: np.ndarray    # (n,) int8 Split codes

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def split(self, which: Split) -> tuple[np.ndarray, np.ndarray]:
        mask = self.splits == int(which)
        return self.features[mask], self.labels[mask]

    def split_size(self, which: Split) -> int:
        return int((self.splits == int(which)).sum())


def _class_features(spec: GaussianMixtureSpec, labels: np.ndarray, split: Split) -> np.ndarray:
    """Features for the given labels, one independent stream per (split, class)."""
    x = np.empty((labels.shape[0], spec.d))
    sd = np.sqrt(spec.variance)
    for c in range(spec.k):
        rows = np.flatnonzero(labels == c)
        if rows.size == 0:
            continue
        rng = substream(spec.seed, _FEATURES, int(split) << 16 | c)
        x[rows] = spec.means[c] + sd * rng.standard_normal((rows.size, spec.d))
    return x


def sample_mixture(spec: GaussianMixtureSpec, n: int, split: Split = Split.TRAIN) -> LabeledDataset:
    """n samples with labels drawn from the priors and Gaussian features."""
    if n < 1:
        raise InvalidInputError(f"sample count must be >= 1, got {n}")
    rng = substream(spec.seed, _LABELS, int(split))
    labels = rng.choice(spec.k, size=n, p=spec.priors).astype(np.int64)
    x = _class_features(spec, labels, split)
    return LabeledDataset(x, labels, np.full(n, int(split), dtype=np.int8))


def sample_class_balanced(spec: GaussianMixtureSpec, per_class: int, split: Split = Split.TRAIN) -> LabeledDataset:
    """Exactly ``per_class`` samples of every class, in class-major order."""
    if per_class < 1:
        raise InvalidInputError(f"per-class count must be >= 1, got {per_class}")
    labels = np.repeat(np.arange(spec.k, dtype=np.int64), per_class)
    x = _class_features(spec, labels, split)
    return LabeledDataset(x, labels, np.full(labels.size, int(split), dtype=np.int8))


def make_mixture_dataset(spec: GaussianMixtureSpec, n_train: int, n_val: int, n_test: int) -> LabeledDataset:
    """Concatenated train/val/test draws from independent per-split streams."""
    parts = [
        sample_mixture(spec, n_train, Split.TRAIN),
        sample_mixture(spec, n_val, Split.VAL),
        sample_mixture(spec, n_test, Split.TEST),
    ]
    return LabeledDataset(
        np.vstack([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        np.concatenate([p.splits for p in parts]),
    )


def bayes_posterior(spec: GaussianMixtureSpec, x) -> np.ndarray:
    """Exact class posterior p(y | x) of the mixture, rows summing to 1.

    Accepts a single feature vector or an (n, d) matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != spec.d:
        raise InvalidInputError(f"features have dimension {x.shape[1]}, spec has {spec.d}")
    sq = ((x[:, None, :] - spec.means[None, :, :]) ** 2).sum(axis=2)
    with np.errstate(divide="ignore"):
        scores = np.log(spec.priors)[None, :] - sq / (2.0 * spec.variance)
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    post = e / e.sum(axis=1, keepdims=True)
    return post[0] if single else post


def longtail_counts(n_max: int, k: int, rho: float) -> np.ndarray:
    """Per-class retention counts n_max * rho^(-k/(K-1)), rounded half-up."""
    if rho < 1.0:
        raise InvalidInputError(f"imbalance factor must be >= 1, got {rho}")
    if k < 2:
        raise InvalidInputError(f"need at least 2 classes, got {k}")
    exponents = -np.arange(k) / (k - 1)
    return np.floor(n_max * np.power(rho, exponents) + 0.5).astype(np.int64)


def make_longtail(ds: LabeledDataset, rho: float, n_max: int, seed: int) -> LabeledDataset:
    """Thin the training split to an exponential class profile.

    Class 0 is the head and keeps n_max samples; class k keeps
    round(n_max * rho^(-k/(K-1))), drawn uniformly without replacement from
    its own stream.  Validation and test samples pass through untouched.
    """
    k = int(ds.labels.max()) + 1
    counts = longtail_counts(n_max, k, rho)
    train_mask = ds.splits == int(Split.TRAIN)
    keep = np.flatnonzero(~train_mask).tolist()
    for c in range(k):
        rows = np.flatnonzero(train_mask & (ds.labels == c))
        if rows.size < counts[c]:
            raise InvalidInputError(
                f"class {c} has {rows.size} training samples, needs {counts[c]}"
            )
        rng = substream(seed, _LONGTAIL, c)
        keep.extend(rng.choice(rows, size=counts[c], replace=False).tolist())
    keep = np.sort(np.asarray(keep, dtype=np.int64))
    return LabeledDataset(ds.features[keep], ds.labels[keep], ds.splits[keep])


def carve_validation(ds: LabeledDataset, n_val: int, seed: int) -> LabeledDataset:
    """Retag a uniform random subset of the training split as validation."""
    train_rows = np.flatnonzero(ds.splits == int(Split.TRAIN))
    if not 1 <= n_val < train_rows.size:
        raise InvalidInputError(
            f"cannot carve {n_val} validation samples from {train_rows.size} training samples"
        )
    rng = substream(seed, _VAL_CARVE)
    chosen = rng.choice(train_rows, size=n_val, replace=False)
    splits = ds.splits.copy()
    splits[chosen] = int(Split.VAL)
    return LabeledDataset(ds.features, ds.labels, splits)


def shift_dataset(ds: LabeledDataset, noise_sigma: float, seed: int) -> LabeledDataset:
    """Add isotropic Gaussian feature noise; labels and splits unchanged."""
    if noise_sigma < 0.0:
        raise InvalidInputError(f"noise sigma must be >= 0, got {noise_sigma}")
    rng = substream(seed, _SHIFT)
    noise = noise_sigma * rng.standard_normal(ds.features.shape)
    return LabeledDataset(ds.features + noise, ds.labels, ds.splits)
