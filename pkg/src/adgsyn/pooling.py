"""Shared-projection cross-attention pooling between the node sets of two drugs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeMismatch
from .layers import Dropout, LayerNorm, Module, glorot
from .tensor import Parameter, Tensor


def cross_scores(k: Tensor, q: Tensor, d: int) -> Tensor:
    """tanh(K Q^T / sqrt(d)); works on (n, d') or batched (B, n, d') operands."""
    if k.shape[-1] != q.shape[-1]:
        raise ShapeMismatch("cross_scores", k.shape, q.shape)
    return T.tanh(T.matmul(k, T.transpose(q)) * np.float32(1.0 / np.sqrt(d)))


def node_weights(a: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Softmax over the nodes of ``a``'s leading node axis after summing over ``axis``.

    ``mask`` marks nodes to hide (True = masked).
    """
    return T.softmax(T.sum(a, axis=axis), axis=-1, mask=mask)


class _Projections(Module):
    def __init__(self, d_in, d_out, rng):
        self.w_q = Parameter(glorot(rng, d_in, d_out))
        self.w_k = Parameter(glorot(rng, d_in, d_out))
        self.w_v = Parameter(glorot(rng, d_in, d_out))

    def __call__(self, x):
        return (T.relu(T.matmul(x, self.w_q)), T.relu(T.matmul(x, self.w_k)),
                T.relu(T.matmul(x, self.w_v)))


@dataclass
class PooledPair:
    z_x: Tensor
    z_y: Tensor
    a_x: Tensor
    a_y: Tensor


class DualAttention(Module):
    """Pools two node sets into one vector each.

    With ``shared=False`` every parameter is duplicated per side; that
    variant exists for the parameter-census comparison.
    """

    def __init__(self, d_in, d_out, rng, dropout=0.2, shared=True, eps=1e-5):
        self.d_in, self.d_out, self.shared = d_in, d_out, shared
        self.proj = _Projections(d_in, d_out, rng)
        self.norm = LayerNorm(d_out, eps)
        if not shared:
            self.proj_y = _Projections(d_in, d_out, rng)
            self.norm_y = LayerNorm(d_out, eps)
        self.drop = Dropout(dropout)

    def project(self, x, side=0):
        if x.shape[-1] != self.d_in:
            raise ShapeMismatch("dual_attention.project", x.shape, (self.d_in, self.d_out))
        return (self.proj if self.shared or side == 0 else self.proj_y)(x)

    def forward(self, x_x: Tensor, x_y: Tensor, mask_x=None, mask_y=None) -> PooledPair:
        mask_x = None if mask_x is None else np.asarray(mask_x, dtype=bool)
        mask_y = None if mask_y is None else np.asarray(mask_y, dtype=bool)
        single = x_x.ndim == 2
        if single:
            x_x = x_x.reshape(1, *x_x.shape)
            x_y = x_y.reshape(1, *x_y.shape)
            mask_x = None if mask_x is None else mask_x[None]
            mask_y = None if mask_y is None else mask_y[None]
        if x_x.shape[0] != x_y.shape[0]:
            raise ShapeMismatch("dual_attention", x_x.shape, x_y.shape)
        q_x, k_x, v_x = self.project(x_x, 0)
        q_y, k_y, v_y = self.project(x_y, 1)
        a_xy = cross_scores(k_x, q_y, self.d_in)  # B x n_x x n_y
        a_yx = cross_scores(k_y, q_x, self.d_in)  # B x n_y x n_x
        # masked partner nodes do not contribute to the score sums
        if mask_y is not None:
            a_xy = a_xy * (~mask_y)[:, None, :].astype(np.float32)
        if mask_x is not None:
            a_yx = a_yx * (~mask_x)[:, None, :].astype(np.float32)
        w_x = node_weights(a_xy, axis=2, mask=mask_x)
        w_y = node_weights(a_yx, axis=2, mask=mask_y)
        z_x = self._fuse(w_x, v_x, mask_x, self.norm)
        z_y = self._fuse(w_y, v_y, mask_y, self.norm if self.shared else self.norm_y)
        if single:
            z_x, z_y, w_x, w_y = (t.reshape(t.shape[1:]) for t in (z_x, z_y, w_x, w_y))
        return PooledPair(z_x, z_y, w_x, w_y)

    def _fuse(self, w, v, mask, norm):
        b, n, d = v.shape
        weighted = T.matmul(self.drop(w).reshape(b, 1, n), v).reshape(b, d)
        if mask is None:
            residual = T.mean(v, axis=1)
        else:
            keep = (~mask).astype(np.float32)
            residual = T.sum(v * keep[:, :, None], axis=1) * (1.0 / keep.sum(axis=1, keepdims=True))
        return norm(weighted + residual)
