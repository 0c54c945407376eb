"""Shared test utilities: finite-difference oracles and worked fixtures."""

import numpy as np

from gcecal.losses import loss_and_grad
from gcecal.trainer import forward

# Logits whose two-class softmax hits the decimal confidence exactly in
# float64 (found by scanning ulp neighbours of log(p/(1-p))).
LOGIT_CONF_08 = 1.3862943611198908   # softmax([t, 0])[0] == 0.8
LOGIT_CONF_06 = 0.4054651081081642   # softmax([t, 0])[0] == 0.6


def fd_logit_gradient(fn, z, h=1e-5):
    """Central finite differences of a scalar loss over every logit entry."""
    g = np.zeros_like(z)
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            zp = z.copy()
            zp[i, j] += h
            zm = z.copy()
            zm[i, j] -= h
            g[i, j] = (fn(zp) - fn(zm)) / (2.0 * h)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-6, atol=1e-8):
    """Entrywise |a - n| <= atol or relative error <= rtol."""
    diff = np.abs(analytic - numeric)
    rel = diff / np.maximum(np.abs(numeric), 1e-300)
    bad = (diff > atol) & (rel > rtol)
    assert not bad.any(), f"gradient mismatch: max abs {diff.max():.3e}, max rel {rel[diff > atol].max():.3e}"


def fd_param_gradients(params, x, y, spec, h=1e-6):
    """Central finite differences over every MLP weight and bias."""
    grads_w, grads_b = [], []
    for store, out in ((params.weights, grads_w), (params.biases, grads_b)):
        for arr in store:
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                i = it.multi_index
                old = arr[i]
                arr[i] = old + h
                hi, _ = loss_and_grad(forward(params, x), y, spec)
                arr[i] = old - h
                lo, _ = loss_and_grad(forward(params, x), y, spec)
                arr[i] = old
                g[i] = (hi - lo) / (2.0 * h)
            out.append(g)
    return grads_w, grads_b


def two_subset_fixture():
    """The worked binary example: 50 samples at confidence 0.8 with 80%
    accuracy plus 50 at confidence 0.6 with 60% accuracy; overall accuracy
    0.7 and perfectly calibrated."""
    z_a = np.tile([LOGIT_CONF_08, 0.0], (50, 1))          # predict class 0, conf 0.8
    y_a = np.array([0] * 40 + [1] * 10)
    z_b = np.tile([0.0, LOGIT_CONF_06], (50, 1))          # predict class 1, conf 0.6
    y_b = np.array([0] * 20 + [1] * 30)
    return np.vstack([z_a, z_b]), np.concatenate([y_a, y_b])


def uniform_06_fixture():
    """The trivially calibrated model: confidence 0.6 everywhere, 60% correct."""
    z = np.tile([LOGIT_CONF_06, 0.0], (100, 1))           # predict class 0, conf 0.6
    y = np.array([0] * 60 + [1] * 40)
    return z, y


def random_logits(rng, n, k, scale=2.0):
    z = rng.normal(0.0, scale, (n, k))
    y = rng.integers(0, k, n)
    return z, y
