"""Learnable layers on top of the tensor core."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeMismatch
from .graphs import GraphBatch
from .tensor import Parameter, Tensor


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out)).astype(np.float32)


class Module:
    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def set_rng(self, rng: np.random.Generator):
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng
        return self


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = Parameter(glorot(rng, in_dim, out_dim))
        self.bias = Parameter(np.zeros(out_dim, dtype=np.float32)) if bias else None

    def forward(self, x):
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatch("linear", x.shape, self.weight.shape)
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class Dropout(Module):
    def __init__(self, rate=0.2, rng=None):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        # models replace this through set_rng; the default keeps standalone use deterministic
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x):
        return T.dropout(x, self.rate, self.rng, self.training)


class LayerNorm(Module):
    def __init__(self, width, eps=1e-5):
        self.eps = eps
        self.gain = Parameter(np.ones(width, dtype=np.float32))
        self.bias = Parameter(np.zeros(width, dtype=np.float32))

    def forward(self, x):
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """Linear stages with ReLU and dropout between them; the last stage is linear."""

    def __init__(self, widths, rng, dropout=0.2):
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        self.drop = Dropout(dropout)

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = self.drop(T.relu(x))
        return x


class GatHead(Module):
    def __init__(self, in_dim, head_dim, rng):
        self.weight = Parameter(glorot(rng, in_dim, head_dim))
        # [a_target ; a_source]
        self.att = Parameter(glorot(rng, 2 * head_dim, 1, shape=(2 * head_dim,)))


class GatLayer(Module):
    """Multi-head graph attention with self loops; heads are concatenated.

    The nonlinearity is left to the caller.
    """

    def __init__(self, in_dim, heads, head_dim, rng, negative_slope=0.2):
        self.in_dim, self.n_heads, self.head_dim = in_dim, heads, head_dim
        self.negative_slope = negative_slope
        for i in range(heads):
            setattr(self, f"head{i}", GatHead(in_dim, head_dim, rng))
        self.bias = Parameter(np.zeros(heads * head_dim, dtype=np.float32))

    @property
    def out_dim(self):
        return self.n_heads * self.head_dim

    @property
    def heads(self):
        return [getattr(self, f"head{i}") for i in range(self.n_heads)]

    def forward(self, x: Tensor, batch: GraphBatch, return_attention=False):
        if x.ndim != 2 or x.shape[-1] != self.in_dim or x.shape[0] != batch.n_nodes:
            raise ShapeMismatch("gat", x.shape, (batch.n_nodes, self.in_dim))
        h, d = self.n_heads, self.head_dim
        n = x.shape[0]
        w = T.concat([hd.weight for hd in self.heads], axis=1)
        att = T.concat([hd.att.reshape(1, 2 * d) for hd in self.heads], axis=0)  # h x 2d
        wx = T.matmul(x, w)
        wx3 = wx.reshape(n, h, d)
        s_dst = T.sum(wx3 * att[:, :d], axis=-1)
        s_src = T.sum(wx3 * att[:, d:], axis=-1)
        e = T.leaky_relu(
            T.spmm(batch.gather_dst, s_dst, batch.t("gather_dst"))
            + T.spmm(batch.gather_src, s_src, batch.t("gather_src")),
            self.negative_slope,
        )
        alpha = T.segment_softmax(e, batch.indptr)  # E x h
        msg = T.spmm(batch.gather_src, wx, batch.t("gather_src")).reshape(-1, h, d)
        msg = (msg * alpha.reshape(-1, h, 1)).reshape(-1, h * d)
        out = T.spmm(batch.scatter_dst, msg, batch.t("scatter_dst")) + self.bias
        return (out, alpha) if return_attention else out


class GcnLayer(Module):
    """Symmetric-normalized propagation D^-1/2 (A + I) D^-1/2 Z Theta (no activation)."""

    def __init__(self, in_dim, out_dim, rng):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.theta = Linear(in_dim, out_dim, rng, bias=False)

    def forward(self, x, batch: GraphBatch):
        if x.ndim != 2 or x.shape[0] != batch.n_nodes:
            raise ShapeMismatch("gcn", x.shape, (batch.n_nodes, self.in_dim))
        return T.spmm(batch.gcn_norm, self.theta(x), batch.t("gcn_norm"))


class LstmCell(Module):
    """Gate order i, f, g, o packed along the output axis."""

    def __init__(self, input_size, hidden_size, rng):
        self.input_size, self.hidden_size = input_size, hidden_size
        self.weight_ih = Parameter(glorot(rng, input_size, 4 * hidden_size))
        self.weight_hh = Parameter(glorot(rng, hidden_size, 4 * hidden_size))
        self.bias = Parameter(np.zeros(4 * hidden_size, dtype=np.float32))

    def forward(self, x, state=None):
        if x.shape[-1] != self.input_size:
            raise ShapeMismatch("lstm", x.shape, (x.shape[0], self.input_size))
        hs = self.hidden_size
        gates = T.matmul(x, self.weight_ih)
        if state is not None:
            h, c = state
            if h.shape[-1] != hs or c.shape[-1] != hs:
                raise ShapeMismatch("lstm state", h.shape, c.shape)
            gates = gates + T.matmul(h, self.weight_hh)
        gates = gates + self.bias
        i = T.sigmoid(gates[:, :hs])
        f = T.sigmoid(gates[:, hs:2 * hs])
        g = T.tanh(gates[:, 2 * hs:3 * hs])
        o = T.sigmoid(gates[:, 3 * hs:])
        c_new = i * g if state is None else f * state[1] + i * g
        h_new = o * T.tanh(c_new)
        return h_new, c_new


def lstm_step(cell: LstmCell, state, x):
    return cell(x, state)


class BiLstm(Module):
    """Bidirectional LSTM over a short per-node sequence; returns concatenated final states."""

    def __init__(self, input_size, hidden_size, rng):
        self.forward_cell = LstmCell(input_size, hidden_size, rng)
        self.backward_cell = LstmCell(input_size, hidden_size, rng)

    @property
    def out_dim(self):
        return 2 * self.forward_cell.hidden_size

    def forward(self, sequence):
        state = None
        for x in sequence:
            state = self.forward_cell(x, state)
        h_fwd = state[0]
        state = None
        for x in reversed(sequence):
            state = self.backward_cell(x, state)
        return T.concat([h_fwd, state[0]], axis=-1)
