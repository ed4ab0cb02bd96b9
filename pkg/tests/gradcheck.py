"""Finite-difference gradient checks of each layer against float64 oracles.

Each case builds a small layer with random Single32 parameters, runs it on
the tape, and differentiates ``sum(out * R)`` analytically. The reference
gradient is a central difference (eps = 1e-4) of an independent float64
forward evaluated at the same Single32 parameter values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import oracles as O
from adgsyn import tensor as T
from adgsyn.chem import parse_smiles
from adgsyn.graphs import batch_graphs
from adgsyn.head import FusionHead, hybrid_loss
from adgsyn.layers import BiLstm, GatLayer, GcnLayer, LayerNorm, Linear
from adgsyn.pooling import DualAttention
from adgsyn.tensor import Tape, Tensor

EPS = 1e-4
TOL = 1e-3
MAX_COORDS = 48
GRAPH_SMILES = ["CC(O)C=O", "c1ccccc1", "CCN(C)C", "OC1CCCC1N", "CC#N", "C1=CC=CN=C1O"]


@dataclass
class CheckResult:
    layer: str
    seed: int
    worst: float
    forward_err: float

    @property
    def ok(self) -> bool:
        return self.worst < TOL and self.forward_err < 1e-4


def rel_err(a, b) -> float:
    a, b = np.asarray(a, np.float64).ravel(), np.asarray(b, np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def _randomize(module, rng, scale=0.5):
    for p in module.parameters():
        p.assign(rng.normal(scale=scale, size=p.shape))


def _leaf(rng, *shape):
    return Tensor(rng.normal(size=shape).astype(np.float32), requires_grad=True)


def _graph(rng, in_dim):
    g = parse_smiles(GRAPH_SMILES[rng.integers(len(GRAPH_SMILES))])
    feats = rng.normal(size=(g.n_atoms, in_dim)).astype(np.float32)
    batch = batch_graphs([g], features=[feats])
    adj = O.dense_adjacency(g.n_atoms, [(i, j) for i, j, _ in g.bonds])
    return batch, feats, adj


def _check(layer, seed, tensors, analytic_forward, oracle_forward, rng):
    """``tensors``: Single32 Tensors whose gradients are checked.

    ``oracle_forward(values)`` takes float64 copies in the same order and
    returns the oracle output(s); the loss is the sum of out * R.
    """
    probe = analytic_forward()
    probe = probe if isinstance(probe, tuple) else (probe,)
    weights = [rng.normal(size=o.shape).astype(np.float32) for o in probe]
    with Tape() as tape:
        outs = analytic_forward()
        outs = outs if isinstance(outs, tuple) else (outs,)
        loss = None
        for o, w in zip(outs, weights):
            term = T.sum(o * w)
            loss = term if loss is None else loss + term
    tape.backward(loss)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.astype(np.float64) for t in tensors]

    values = [t.data.astype(np.float64) for t in tensors]
    w64 = [w.astype(np.float64) for w in weights]

    def f():
        ref = oracle_forward(values)
        ref = ref if isinstance(ref, tuple) else (ref,)
        return float(sum(np.sum(r * w) for r, w in zip(ref, w64)))

    ref_out = oracle_forward(values)
    ref_out = ref_out if isinstance(ref_out, tuple) else (ref_out,)
    fwd = max(rel_err(o.numpy(), r) for o, r in zip(outs, ref_out))

    coords = [None if v.size <= MAX_COORDS else rng.choice(v.size, MAX_COORDS, replace=False) for v in values]
    numeric = O.central_difference(f, values, EPS, coords)
    worst = 0.0
    for a, n, c in zip(analytic, numeric, coords):
        if c is None:
            worst = max(worst, rel_err(a, n))
        else:
            worst = max(worst, rel_err(a.ravel()[c], n.ravel()[c]))
    return CheckResult(layer, seed, worst, fwd)


def check_linear(seed):
    rng = np.random.default_rng(seed)
    lin = Linear(5, 4, rng)
    _randomize(lin, rng)
    x = _leaf(rng, 3, 5)
    return _check("linear", seed, [x, lin.weight, lin.bias], lambda: lin(x),
                  lambda v: O.linear(v[0], v[1], v[2]), rng)


def check_gat(seed):
    rng = np.random.default_rng(seed)
    layer = GatLayer(6, 2, 3, rng)
    _randomize(layer, rng)
    batch, feats, adj = _graph(rng, 6)
    x = Tensor(feats, requires_grad=True)
    params = [p for h in layer.heads for p in (h.weight, h.att)] + [layer.bias]

    def oracle(v):
        heads = [(v[1 + 2 * i], v[2 + 2 * i]) for i in range(layer.n_heads)]
        return O.gat(v[0], adj, heads, v[-1], layer.negative_slope)

    return _check("gat", seed, [x, *params], lambda: layer(x, batch), oracle, rng)


def check_gcn_path(seed):
    rng = np.random.default_rng(seed)
    l1, l2 = GcnLayer(5, 4, rng), GcnLayer(4, 3, rng)
    _randomize(l1, rng)
    _randomize(l2, rng)
    batch, feats, adj = _graph(rng, 5)
    x = Tensor(feats, requires_grad=True)
    return _check("gcn", seed, [x, l1.theta.weight, l2.theta.weight],
                  lambda: T.relu(l2(T.relu(l1(x, batch)), batch)),
                  lambda v: O.relu(O.gcn(O.relu(O.gcn(v[0], adj, v[1])), adj, v[2])), rng)


def check_lstm(seed):
    rng = np.random.default_rng(seed)
    lstm = BiLstm(4, 3, rng)
    _randomize(lstm, rng)
    z1, z2 = _leaf(rng, 3, 4), _leaf(rng, 3, 4)
    cells = (lstm.forward_cell, lstm.backward_cell)
    params = [p for c in cells for p in (c.weight_ih, c.weight_hh, c.bias)]
    return _check("lstm", seed, [z1, z2, *params], lambda: lstm([z1, z2]),
                  lambda v: O.bilstm([v[0], v[1]], tuple(v[2:5]), tuple(v[5:8])), rng)


def check_layer_norm(seed):
    rng = np.random.default_rng(seed)
    ln = LayerNorm(6)
    _randomize(ln, rng)
    x = _leaf(rng, 4, 6)
    return _check("layer_norm", seed, [x, ln.gain, ln.bias], lambda: ln(x),
                  lambda v: O.layer_norm(v[0], v[1], v[2], ln.eps), rng)


def check_dual_attention(seed):
    rng = np.random.default_rng(seed)
    pool = DualAttention(5, 4, rng, dropout=0.2)
    pool.eval()
    _randomize(pool, rng)
    x_x, x_y = _leaf(rng, 3, 5), _leaf(rng, 4, 5)
    pr = pool.proj
    params = [pr.w_q, pr.w_k, pr.w_v, pool.norm.gain, pool.norm.bias]

    def fwd():
        out = pool(x_x, x_y)
        return out.z_x, out.z_y

    def oracle(v):
        z_x, z_y, _, _ = O.dual_attention(v[0], v[1], *v[2:], eps=pool.norm.eps)
        return z_x, z_y

    return _check("dual_attention", seed, [x_x, x_y, *params], fwd, oracle, rng)


def check_fusion_head(seed):
    rng = np.random.default_rng(seed)
    head = FusionHead(10, 6, rng, dropout=0.2)
    head.eval()
    _randomize(head, rng)
    x = _leaf(rng, 3, 10)
    params = [head.fc1.weight, head.fc1.bias, head.fc2.weight, head.fc2.bias]
    return _check("fusion_head", seed, [x, *params], lambda: head(x),
                  lambda v: O.fusion_head(*v), rng)


def check_hybrid_loss(seed):
    rng = np.random.default_rng(seed)
    logits = _leaf(rng, 6, 2)
    labels = rng.integers(0, 2, size=6)
    return _check("hybrid_loss", seed, [logits], lambda: hybrid_loss(logits, labels),
                  lambda v: O.hybrid_loss(v[0], labels), rng)


CHECKS = {
    "linear": check_linear,
    "gat": check_gat,
    "gcn": check_gcn_path,
    "lstm": check_lstm,
    "layer_norm": check_layer_norm,
    "dual_attention": check_dual_attention,
    "fusion_head": check_fusion_head,
    "hybrid_loss": check_hybrid_loss,
}
