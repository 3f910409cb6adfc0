"""Deterministic numpy training of the small reference MLP."""
from __future__ import annotations

import numpy as np

from .layers import ModelGraph, reference_mlp


def init_mlp(hidden: int = 64, seed: int = 0, n_in: int = 784, n_out: int = 10) -> ModelGraph:
    """He-initialised, untrained MLP."""
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, hidden))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, n_out))
    return reference_mlp(w1, np.zeros(hidden), w2, np.zeros(n_out))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_reference_mlp(images, labels, hidden: int = 64, seed: int = 0, epochs: int = 5,
                        batch_size: int = 64, lr: float = 0.1, log=None) -> ModelGraph:
    """Minibatch SGD on softmax cross-entropy, 784 -> hidden -> ReLU -> 10.

    Everything random (init and shuffling) comes from ``seed``, so two runs
    with the same arguments give bitwise identical weights.
    """
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) != len(y) or len(x) == 0:
        raise ValueError("need a non-empty training set with one label per image")
    if x.shape[1] != 784:
        raise ValueError(f"expected 28x28 images, got {x.shape[1]} pixels per image")
    init = init_mlp(hidden, seed)
    w1 = init.layers[1].weights.astype(np.float64)
    b1 = np.zeros(hidden)
    w2 = init.layers[3].weights.astype(np.float64)
    b2 = np.zeros(10)
    rng = np.random.default_rng([seed, 1])
    onehot = np.eye(10)[y]
    for epoch in range(epochs):
        order = rng.permutation(len(x))
        loss = 0.0
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            xb, tb = x[idx], onehot[idx]
            h_pre = xb @ w1 + b1
            h = np.maximum(h_pre, 0.0)
            p = _softmax(h @ w2 + b2)
            loss += -np.sum(tb * np.log(p + 1e-12))
            dz = (p - tb) / len(idx)
            dw2 = h.T @ dz
            dh = (dz @ w2.T) * (h_pre > 0)
            dw1 = xb.T @ dh
            w2 -= lr * dw2
            b2 -= lr * dz.sum(axis=0)
            w1 -= lr * dw1
            b1 -= lr * dh.sum(axis=0)
        if log is not None:
            log(f"epoch {epoch + 1}/{epochs}: mean loss {loss / len(x):.4f}")
    return reference_mlp(w1, b1, w2, b2)
