"""Fusion classifier and the hybrid cross-entropy + MSE loss."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import WidthMismatch
from .layers import Dropout, Linear, Module
from .tensor import Tensor, autocast

POSITIVE = 1


class FusionHead(Module):
    """768 -> 64 (ReLU, dropout) -> 2 logits, always computed in Single32."""

    def __init__(self, in_dim, hidden, rng, dropout=0.2, n_classes=2):
        self.in_dim = in_dim
        self.fc1 = Linear(in_dim, hidden, rng)
        self.drop = Dropout(dropout)
        self.fc2 = Linear(hidden, n_classes, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise WidthMismatch(f"fusion input width {x.shape[-1]} != {self.in_dim}")
        with autocast(None):
            return self.fc2(self.drop(T.relu(self.fc1(x))))


def predict(head: FusionHead, pooled: Tensor, cell_ctx: Tensor):
    """Logits and P(synergy) for pooled drug vectors plus cell context (1-D or batched)."""
    single = pooled.ndim == 1
    if single:
        pooled, cell_ctx = pooled.reshape(1, -1), cell_ctx.reshape(1, -1)
    if pooled.shape[0] != cell_ctx.shape[0]:
        raise WidthMismatch(f"batch sizes differ: {pooled.shape[0]} vs {cell_ctx.shape[0]}")
    logits = head(T.concat([pooled, cell_ctx], axis=-1))
    prob = T.softmax(logits, axis=-1)[:, POSITIVE]
    if single:
        return logits.reshape(-1), float(prob.data[0])
    return logits, prob


def hybrid_loss(logits: Tensor, labels, mse_weight: float = 0.1) -> Tensor:
    """mean CE(softmax(z), y) + mse_weight * mean((softmax(z) - onehot(y))^2), in Single32."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim == 1:
        logits = logits.reshape(1, -1)
    if set(np.unique(labels)) - {0, 1}:
        raise ValueError("labels must be binary")
    onehot = np.zeros(logits.shape, dtype=np.float32)
    onehot[np.arange(len(labels)), labels] = 1.0
    with autocast(None):
        ce = -T.sum(T.log_softmax(logits, axis=-1) * onehot) * (1.0 / len(labels))
        if mse_weight == 0:
            return ce
        diff = T.softmax(logits, axis=-1) - onehot
        return ce + T.mean(diff * diff) * mse_weight
