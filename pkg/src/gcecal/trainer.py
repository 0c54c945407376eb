"""Small fully-connected classifier trained with mini-batch SGD.

The network is a plain affine-rectifier chain with an identity output layer;
gradients chain the analytic logit gradients of the configured loss through
the layers, so batch-coupled losses train exactly like per-sample ones.
Training is bitwise deterministic for a fixed seed: initialization and the
per-epoch shuffle each use their own named stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import LabeledDataset, Split, substream
from .errors import InvalidInputError
from .losses import LossKind, LossSpec, loss_and_grad

_INIT = 10
_SHUFFLE = 11


@dataclass
class MlpParams:
    """Layer sizes plus one weight matrix and bias vector per affine layer."""

    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "MlpParams":
        return MlpParams(list(self.sizes), [w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec
    epochs: int
    batch_size: int = 128
    lr_schedule: tuple = ((0, 0.1),)
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 1
    hidden: tuple = (64,)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be >= 1")
        epochs = [e for e, _ in self.lr_schedule]
        if not self.lr_schedule or epochs != sorted(epochs) or len(set(epochs)) != len(epochs):
            raise InvalidInputError("lr_schedule epochs must be strictly ascending")
        if any(lr <= 0.0 for _, lr in self.lr_schedule):
            raise InvalidInputError("learning rates must be > 0")
        if not 0.0 <= self.momentum < 1.0 or self.weight_decay < 0.0:
            raise InvalidInputError("momentum must be in [0, 1) and weight_decay >= 0")

    def to_dict(self) -> dict:
        return {
            "loss": {"kind": self.loss.kind.value, "alpha": self.loss.alpha, "gamma": self.loss.gamma},
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_schedule": [[int(e), float(lr)] for e, lr in self.lr_schedule],
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "hidden": list(self.hidden),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        loss = d["loss"]
        spec = LossSpec(LossKind(loss["kind"]), loss.get("alpha", 0.0), loss.get("gamma", 0.0))
        return cls(
            loss=spec,
            epochs=d["epochs"],
            batch_size=d.get("batch_size", 128),
            lr_schedule=tuple((int(e), float(lr)) for e, lr in d.get("lr_schedule", [[0, 0.1]])),
            momentum=d.get("momentum", 0.9),
            weight_decay=d.get("weight_decay", 5e-4),
            seed=d.get("seed", 1),
            hidden=tuple(d.get("hidden", [64])),
        )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_error: float


def init_mlp(d_in: int, hidden, k: int, seed: int) -> MlpParams:
    """Fan-in-scaled uniform weights, zero biases, one stream per layer."""
    sizes = [d_in, *hidden, k]
    weights, biases = [], []
    for layer in range(len(sizes) - 1):
        fan_in, fan_out = sizes[layer], sizes[layer + 1]
        rng = substream(seed, _INIT, layer)
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases)


def _forward_cached(params: MlpParams, x: np.ndarray):
    """Logits plus the post-activation inputs of every affine layer."""
    inputs = [x]
    h = x
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w + b
        if layer < last:
            h = np.maximum(a, 0.0)
            inputs.append(h)
        else:
            return a, inputs
    raise AssertionError("unreachable")


def forward(params: MlpParams, x) -> np.ndarray:
    """Logits of the network for a batch of feature rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.sizes[0]:
        raise InvalidInputError(f"features must be (n, {params.sizes[0]}), got {x.shape}")
    logits, _ = _forward_cached(params, x)
    return logits


def backward(params: MlpParams, x, y, spec: LossSpec):
    """Loss value and parameter gradients for one batch.

    The logit gradient comes from the loss module (for the generative
    cross-entropy family it couples all samples in the batch) and is chained
    through the rectifier layers.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.sizes[0]:
        raise InvalidInputError(f"features must be (n, {params.sizes[0]}), got {x.shape}")
    logits, inputs = _forward_cached(params, x)
    loss, delta = loss_and_grad(logits, y, spec)
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    for layer in range(len(params.weights) - 1, -1, -1):
        grads_w[layer] = inputs[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer].T) * (inputs[layer] > 0.0)
    return loss, (grads_w, grads_b)


def init_momentum_state(params: MlpParams):
    return (
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def sgd_step(params: MlpParams, grads, state, lr: float, momentum: float, weight_decay: float) -> None:
    """Classic momentum update with L2 decay folded into the gradient:
    v <- momentum*v + (grad + wd*param); param <- param - lr*v."""
    grads_w, grads_b = grads
    vel_w, vel_b = state
    for layer in range(len(params.weights)):
        vel_w[layer] = momentum * vel_w[layer] + grads_w[layer] + weight_decay * params.weights[layer]
        params.weights[layer] -= lr * vel_w[layer]
        vel_b[layer] = momentum * vel_b[layer] + grads_b[layer] + weight_decay * params.biases[layer]
        params.biases[layer] -= lr * vel_b[layer]


def _lr_at(schedule, epoch: int) -> float:
    lr = schedule[0][1]
    for start, value in schedule:
        if epoch >= start:
            lr = value
    return lr


def _batched_loss(params: MlpParams, x: np.ndarray, y: np.ndarray, spec: LossSpec, batch_size: int) -> float:
    total, n = 0.0, x.shape[0]
    for start in range(0, n, batch_size):
        xb, yb = x[start : start + batch_size], y[start : start + batch_size]
        loss, _ = loss_and_grad(forward(params, xb), yb, spec)
        total += loss * xb.shape[0]
    return total / n


def train(ds: LabeledDataset, cfg: TrainConfig) -> tuple[MlpParams, list[EpochStats]]:
    """Mini-batch SGD over the training split, with per-epoch statistics.

    The shuffle order of epoch e comes from the stream (seed, shuffle, e);
    the last incomplete batch is kept.  Batch-coupled losses see exactly the
    samples of their batch.
    """
    x_train, y_train = ds.split(Split.TRAIN)
    x_val, y_val = ds.split(Split.VAL)
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise InvalidInputError("dataset needs nonempty TRAIN and VAL splits")
    k = int(max(y_train.max(), y_val.max())) + 1

    params = init_mlp(x_train.shape[1], cfg.hidden, k, cfg.seed)
    state = init_momentum_state(params)
    history: list[EpochStats] = []
    n = x_train.shape[0]
    for epoch in range(cfg.epochs):
        perm = substream(cfg.seed, _SHUFFLE, epoch).permutation(n)
        lr = _lr_at(cfg.lr_schedule, epoch)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            rows = perm[start : start + cfg.batch_size]
            loss, grads = backward(params, x_train[rows], y_train[rows], cfg.loss)
            sgd_step(params, grads, state, lr, cfg.momentum, cfg.weight_decay)
            loss_sum += loss * rows.size
        val_logits = forward(params, x_val)
        val_loss = _batched_loss(params, x_val, y_val, cfg.loss, cfg.batch_size)
        val_error = float((val_logits.argmax(axis=1) != y_val).mean())
        history.append(EpochStats(epoch, loss_sum / n, val_loss, val_error))
    return params, history
