"""Precision-tagged dense arrays with tape-based reverse-mode differentiation.

Half16 arithmetic is emulated: operands are rounded to binary16, the kernel
runs in float32, and the result is rounded back to binary16 (round to nearest
even, overflow to +-inf). Gradients are always float32; when an op ran in
Half16 its incoming and outgoing gradients are rounded through binary16 too,
which is what makes loss scaling necessary and overflow detectable.

Usage::

    with Tape() as tape, autocast(AMP_POLICY):
        loss = model(batch)
    tape.backward(loss)
"""

from __future__ import annotations

import contextlib
import threading
import weakref
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import AllMasked, BackwardWithoutGraph, ShapeMismatch

HALF_MAX = 65504.0


class Precision(str, Enum):
    HALF16 = "half16"
    SINGLE32 = "single32"

    @property
    def dtype(self):
        return np.float16 if self is Precision.HALF16 else np.float32

    @property
    def itemsize(self) -> int:
        return 2 if self is Precision.HALF16 else 4


HALF16 = Precision.HALF16
SINGLE32 = Precision.SINGLE32

# Op kinds that must stay in Single32 under every policy.
REQUIRED_FULL = frozenset({"softmax", "grad_accumulate", "loss", "update"})
# Layout ops keep the precision of their input regardless of policy.
PASSTHROUGH = frozenset({"reshape", "transpose", "getitem"})
ALL_KINDS = frozenset({
    "matmul", "spmm", "add", "mul", "relu", "leaky_relu", "tanh", "sigmoid",
    "exp", "log", "sum", "mean", "softmax", "log_softmax", "layer_norm",
    "concat", "dropout", "cast", "loss", "grad_accumulate", "update",
})


@dataclass(frozen=True)
class PrecisionPolicy:
    half_ops: frozenset = frozenset()
    full_ops: frozenset = ALL_KINDS

    def __post_init__(self):
        object.__setattr__(self, "half_ops", frozenset(self.half_ops))
        object.__setattr__(self, "full_ops", frozenset(self.full_ops))
        if self.half_ops & self.full_ops:
            raise ValueError(f"ops in both half and full sets: {sorted(self.half_ops & self.full_ops)}")
        bad = REQUIRED_FULL & self.half_ops
        if bad:
            raise ValueError(f"ops {sorted(bad)} must run in Single32")
        missing = REQUIRED_FULL - self.full_ops
        if missing:
            raise ValueError(f"ops {sorted(missing)} must be listed in full_ops")

    def is_half(self, kind: str) -> bool:
        return kind in self.half_ops


FULL_PRECISION = PrecisionPolicy()
# Transforms, message passing and gate arithmetic in Half16; normalizations,
# reductions, the loss and everything the optimizer touches in Single32.
AMP_POLICY = PrecisionPolicy(
    half_ops={"matmul", "spmm", "add", "mul", "relu", "leaky_relu", "tanh", "sigmoid", "concat", "dropout"},
    full_ops={"exp", "log", "sum", "mean", "softmax", "log_softmax", "layer_norm", "cast",
              "loss", "grad_accumulate", "update"},
)


class _State(threading.local):
    def __init__(self):
        self.policy = FULL_PRECISION
        self.tape = None
        self.ledgers = []


_state = _State()


def current_policy() -> PrecisionPolicy:
    return _state.policy


@contextlib.contextmanager
def autocast(policy: PrecisionPolicy | None):
    """Run the enclosed ops under ``policy`` (``None`` means full precision)."""
    prev = _state.policy
    _state.policy = policy or FULL_PRECISION
    try:
        yield
    finally:
        _state.policy = prev


_SUB_LIMIT = np.uint32(0x38800000)  # bit pattern of 2^-14, the smallest binary16 normal
_SUB_SCALE = np.float32(2.0 ** 24)     # 1 / binary16 subnormal step


def _subnormal_split(a: np.ndarray):
    mag = a.view(np.uint32) & np.uint32(0x7FFFFFFF)
    sub = (mag < _SUB_LIMIT) & (mag != 0)
    return (a, None) if not sub.any() else (np.where(sub, np.float32(0), a), sub)


def to_half(a) -> np.ndarray:
    """float32 -> binary16, round to nearest even, overflow to +-inf.

    numpy's own cast takes a very slow path for results in the binary16
    subnormal range, which is where unscaled gradients tend to live, so those
    elements are rounded separately on the fixed 2^-24 grid.
    """
    a = np.ascontiguousarray(a, dtype=np.float32)
    safe, sub = _subnormal_split(a)
    with np.errstate(over="ignore"):
        h = safe.astype(np.float16)
    if sub is not None:
        v = a[sub]
        bits = np.rint(np.abs(v) * _SUB_SCALE).astype(np.uint16) | np.where(v < 0, np.uint16(0x8000), np.uint16(0))
        h.view(np.uint16)[sub] = bits
    return h


def round_half(a) -> np.ndarray:
    """Round float32 values through binary16 and return float32."""
    a = np.ascontiguousarray(a, dtype=np.float32)
    safe, sub = _subnormal_split(a)
    with np.errstate(over="ignore"):
        r = safe.astype(np.float16).astype(np.float32)
    if sub is not None:
        r[sub] = np.rint(a[sub] * _SUB_SCALE) / _SUB_SCALE
    return r


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "overflow", "name",
                 "_parents", "_backward", "_half", "_tape", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, precision: Precision | str | None = None, requires_grad=False, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if precision is None:
            precision = HALF16 if arr.dtype == np.float16 else SINGLE32
        precision = Precision(precision)
        if precision is HALF16 and arr.dtype != np.float16:
            self.data = to_half(arr)
        else:
            self.data = np.ascontiguousarray(arr, dtype=precision.dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self.overflow = False
        self.name = name
        self._parents = ()
        self._backward = None
        self._half = False
        self._tape = None

    @property
    def precision(self) -> Precision:
        return HALF16 if self.data.dtype == np.float16 else SINGLE32

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data.astype(np.float32)

    def half_data(self) -> np.ndarray:
        if self.data.dtype == np.float16:
            return self.data
        return to_half(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, precision={self.precision.value}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # operators
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        if isinstance(o, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / o)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Parameter(Tensor):
    """Single32 master weight with a cached Half16 compute shadow."""

    __slots__ = ("shadow",)

    def __init__(self, data, name=None):
        super().__init__(data, SINGLE32, requires_grad=True, name=name)
        self.refresh_shadow()

    def refresh_shadow(self):
        self.shadow = to_half(self.data)

    def assign(self, values):
        self.data[...] = np.asarray(values, dtype=np.float32)
        self.refresh_shadow()

    def half_data(self):
        return self.shadow


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


class MemoryLedger:
    """Byte accounting for tensors produced by ops while the ledger is active."""

    def __init__(self):
        self.bytes_by_precision = {HALF16: 0, SINGLE32: 0}
        self.allocated_by_precision = {HALF16: 0, SINGLE32: 0}
        self.peak_bytes = 0
        self.n_allocations = 0

    @property
    def total_bytes(self) -> int:
        return self.bytes_by_precision[HALF16] + self.bytes_by_precision[SINGLE32]

    @property
    def allocated_bytes(self) -> int:
        return self.allocated_by_precision[HALF16] + self.allocated_by_precision[SINGLE32]

    def allocate(self, t: Tensor):
        prec, nbytes = t.precision, t.data.nbytes
        self.bytes_by_precision[prec] += nbytes
        self.allocated_by_precision[prec] += nbytes
        self.n_allocations += 1
        self.peak_bytes = max(self.peak_bytes, self.total_bytes)
        weakref.finalize(t, self.free, prec, nbytes)

    def free(self, prec, nbytes):
        self.bytes_by_precision[prec] -= nbytes

    def as_dict(self):
        return {
            "bytes_by_precision": {p.value: b for p, b in self.bytes_by_precision.items()},
            "allocated_by_precision": {p.value: b for p, b in self.allocated_by_precision.items()},
            "allocated_bytes": self.allocated_bytes,
            "peak_bytes": self.peak_bytes,
        }

    def __enter__(self):
        _state.ledgers.append(self)
        return self

    def __exit__(self, *exc):
        _state.ledgers.remove(self)
        return False


class Tape:
    """Records ops in execution order; ``backward`` walks the record in reverse."""

    def __init__(self):
        self.nodes = []
        self.leaves = []
        self._prev = None

    def __enter__(self):
        self._prev = _state.tape
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev
        return False

    def record(self, t: Tensor):
        self.nodes.append(t)

    def reset(self):
        for node in self.nodes:
            node._tape = None
            node._parents = ()
            node._backward = None
        self.nodes = []
        self.leaves = []

    def backward(self, loss: Tensor, grad_seed: float = 1.0):
        if loss._tape is not self:
            raise BackwardWithoutGraph("loss was not produced on this tape")
        if loss.size != 1:
            raise ShapeMismatch("backward (loss must be scalar)", loss.shape)
        grads = {id(loss): np.full(loss.shape, grad_seed, dtype=np.float32)}
        # ids whose pending grad is a single binary16-rounded contribution;
        # rounding is idempotent so those skip the rounding on arrival
        exact = set()
        seen_leaves = {}
        for node in reversed(self.nodes):
            key = id(node)
            g = grads.pop(key, None)
            if g is None:
                continue
            if node._half and key not in exact:
                g = round_half(g)
            exact.discard(key)
            parent_grads = node._backward(g)
            for p, gp in zip(node._parents, parent_grads):
                if gp is None or not p.requires_grad:
                    continue
                gp = np.asarray(gp, dtype=np.float32)
                if node._half:
                    gp = round_half(gp)
                pk = id(p)
                if p._backward is None:
                    p.grad = gp.copy() if p.grad is None else p.grad + gp
                    seen_leaves[pk] = p
                elif pk in grads:
                    grads[pk] = grads[pk] + gp
                    exact.discard(pk)
                else:
                    grads[pk] = gp
                    if node._half:
                        exact.add(pk)
        self.leaves = list(seen_leaves.values())


def backward(loss: Tensor):
    """Populate ``.grad`` on every leaf reachable from ``loss``."""
    if loss._tape is None:
        raise BackwardWithoutGraph("no tape recorded the computation of this tensor")
    loss._tape.backward(loss)


# ---------------------------------------------------------------------------
# op machinery


def _castable(t: Tensor) -> bool:
    if t.data.dtype == np.float16 or t.size == 0:
        return True
    src = t.shadow if isinstance(t, Parameter) else t.data
    return bool(np.isfinite(src).all() and np.abs(t.data).max() <= HALF_MAX)


def _use_half(kind: str, *inputs: Tensor) -> bool:
    return _state.policy.is_half(kind) and all(_castable(t) for t in inputs)


def _operands(half: bool, *inputs: Tensor):
    if half:
        return [t.half_data().astype(np.float32) for t in inputs]
    return [t.data.astype(np.float32, copy=False) for t in inputs]


def _record(out: np.ndarray, parents, backward, half: bool) -> Tensor:
    if half:
        arr = to_half(out)
    else:
        arr = np.asarray(out, dtype=np.float32)
    t = Tensor.__new__(Tensor)
    t.data = np.ascontiguousarray(arr)
    t.requires_grad = False
    t.grad = None
    t.overflow = False
    t.name = None
    t._parents = ()
    t._backward = None
    t._half = False
    t._tape = None
    tape = _state.tape
    if tape is not None and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = tuple(parents)
        t._backward = backward
        t._half = half
        t._tape = tape
        tape.record(t)
    for ledger in _state.ledgers:
        ledger.allocate(t)
    return t


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("add", a, b)
    half = _use_half("add", a, b)
    x, y = _operands(half, a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(x + y, (a, b), bw, half)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("sub", a, b)
    half = _use_half("add", a, b)
    x, y = _operands(half, a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(x - y, (a, b), bw, half)


def mul(a, b, kind="mul") -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("mul", a, b)
    half = _use_half(kind, a, b)
    x, y = _operands(half, a, b)

    def bw(g):
        return (
            _unbroadcast(g * y, a.shape) if a.requires_grad else None,
            _unbroadcast(g * x, b.shape) if b.requires_grad else None,
        )

    return _record(x * y, (a, b), bw, half)


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatch("matmul", a.shape, b.shape) from None
    half = _use_half("matmul", a, b)
    x, y = _operands(half, a, b)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(y, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2 and x.ndim > 2:
                k, m = x.shape[-1], g.shape[-1]
                gb = x.reshape(-1, k).T @ g.reshape(-1, m)
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(x, -1, -2), g), b.shape)
        return ga, gb

    return _record(np.matmul(x, y), (a, b), bw, half)


def spmm(s: sp.spmatrix, x, s_t: sp.spmatrix | None = None) -> Tensor:
    """Constant sparse matrix times a dense 2-D tensor."""
    x = _lift(x)
    if x.ndim != 2 or s.shape[1] != x.shape[0]:
        raise ShapeMismatch("spmm", s.shape, x.shape)
    half = _use_half("spmm", x)
    (xv,) = _operands(half, x)
    s_t = s.T.tocsr() if s_t is None else s_t

    def bw(g):
        return (np.asarray(s_t @ g, dtype=np.float32),)

    return _record(np.asarray(s @ xv, dtype=np.float32), (x,), bw, half)


def relu(x) -> Tensor:
    x = _lift(x)
    half = _use_half("relu", x)
    (xv,) = _operands(half, x)
    pos = xv > 0

    def bw(g):
        return (g * pos,)

    return _record(np.where(pos, xv, np.float32(0)), (x,), bw, half)


def leaky_relu(x, negative_slope=0.2) -> Tensor:
    x = _lift(x)
    half = _use_half("leaky_relu", x)
    (xv,) = _operands(half, x)
    slope = np.where(xv > 0, np.float32(1), np.float32(negative_slope))

    def bw(g):
        return (g * slope,)

    return _record(xv * slope, (x,), bw, half)


def tanh(x) -> Tensor:
    x = _lift(x)
    half = _use_half("tanh", x)
    (xv,) = _operands(half, x)
    y = np.tanh(xv)

    def bw(g):
        return (g * (1 - y * y),)

    return _record(y, (x,), bw, half)


def sigmoid(x) -> Tensor:
    x = _lift(x)
    half = _use_half("sigmoid", x)
    (xv,) = _operands(half, x)
    with np.errstate(over="ignore"):
        y = (1 / (1 + np.exp(-xv))).astype(np.float32)

    def bw(g):
        return (g * y * (1 - y),)

    return _record(y, (x,), bw, half)


def exp(x) -> Tensor:
    x = _lift(x)
    half = _use_half("exp", x)
    (xv,) = _operands(half, x)
    y = np.exp(xv)

    def bw(g):
        return (g * y,)

    return _record(y, (x,), bw, half)


def log(x) -> Tensor:
    x = _lift(x)
    half = _use_half("log", x)
    (xv,) = _operands(half, x)

    def bw(g):
        return (g / xv,)

    return _record(np.log(xv), (x,), bw, half)


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    x = _lift(x)
    half = _use_half("sum", x)
    (xv,) = _operands(half, x)
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(xv.sum(axis=axis, keepdims=keepdims), (x,), bw, half)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = _lift(x)
    half = _use_half("mean", x)
    (xv,) = _operands(half, x)
    shape = x.shape
    count = xv.size if axis is None else int(np.prod([shape[a] for a in np.atleast_1d(axis)]))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / np.float32(count), shape).copy(),)

    return _record(xv.mean(axis=axis, keepdims=keepdims), (x,), bw, half)


def softmax(x, axis=-1, mask=None) -> Tensor:
    """Softmax in Single32; ``mask`` marks positions to hide (True = -inf logit)."""
    x = _lift(x)
    (xv,) = _operands(False, x)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), xv.shape)
        if mask.all(axis=axis).any():
            raise AllMasked("every position of a softmax slice is masked")
        xv = np.where(mask, -np.inf, xv)
    shifted = xv - xv.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = (e / e.sum(axis=axis, keepdims=True)).astype(np.float32)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record(y, (x,), bw, False)


def log_softmax(x, axis=-1) -> Tensor:
    x = _lift(x)
    (xv,) = _operands(False, x)
    shifted = xv - xv.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _record(out, (x,), bw, False)


def segment_softmax(x, indptr: np.ndarray) -> Tensor:
    """Softmax over contiguous row segments of ``x`` (rows sorted by segment).

    ``indptr`` follows CSR convention; every segment must be non-empty.
    Runs in Single32 under any policy.
    """
    x = _lift(x)
    (xv,) = _operands(False, x)
    starts = np.asarray(indptr[:-1])
    lengths = np.diff(indptr)
    if (lengths <= 0).any():
        raise ValueError("segment_softmax needs non-empty segments")
    seg = np.repeat(np.arange(len(lengths)), lengths)
    mx = np.maximum.reduceat(xv, starts, axis=0)
    e = np.exp(xv - mx[seg])
    y = (e / np.add.reduceat(e, starts, axis=0)[seg]).astype(np.float32)

    def bw(g):
        return (y * (g - np.add.reduceat(g * y, starts, axis=0)[seg]),)

    return _record(y, (x,), bw, False)


def layer_norm(x, gain, bias, eps=1e-5) -> Tensor:
    x, gain, bias = _lift(x), _lift(gain), _lift(bias)
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeMismatch("layer_norm", x.shape, gain.shape, bias.shape)
    half = _use_half("layer_norm", x, gain, bias)
    xv, gv, bv = _operands(half, x, gain, bias)
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    inv = 1 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + np.float32(eps))
    xhat = xc * inv
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        dxhat = g * gv
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _record(xhat * gv + bv, (x, gain, bias), bw, half)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    half = _use_half("concat", *tensors)
    vals = _operands(half, *tensors)
    try:
        out = np.concatenate(vals, axis=axis)
    except ValueError:
        raise ShapeMismatch("concat", *[t.shape for t in tensors]) from None
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(out, tuple(tensors), bw, half)


def _passthrough(x: Tensor, out: np.ndarray, bw) -> Tensor:
    return _record(out, (x,), bw, x.precision is HALF16)


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    try:
        out = x.data.reshape(shape).astype(np.float32)
    except ValueError:
        raise ShapeMismatch("reshape", x.shape, shape) from None

    def bw(g):
        return (g.reshape(x.shape),)

    return _passthrough(x, out, bw)


def transpose(x, axes=None) -> Tensor:
    x = _lift(x)
    if axes is None:
        axes = tuple(range(x.ndim))[:-2] + (x.ndim - 1, x.ndim - 2)
    inverse = np.argsort(axes)

    def bw(g):
        return (np.transpose(g, inverse),)

    return _passthrough(x, np.transpose(x.data, axes).astype(np.float32), bw)


def getitem(x, key) -> Tensor:
    x = _lift(x)
    out = np.asarray(x.data[key], dtype=np.float32)

    def bw(g):
        full = np.zeros(x.shape, dtype=np.float32)
        np.add.at(full, key, g)
        return (full,)

    return _passthrough(x, out, bw)


def dropout(x, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; the identity (same object) in eval mode or at rate 0."""
    x = _lift(x)
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(np.float32) / np.float32(1.0 - rate)
    return mul(x, Tensor(keep), kind="dropout")


def cast(t, target: Precision | str) -> Tensor:
    """Round to ``target`` precision; Half16 overflow becomes +-inf and sets ``overflow``."""
    t = _lift(t)
    target = Precision(target)
    out = to_half(t.data) if target is HALF16 else t.data.astype(np.float32)
    overflowed = bool(np.isinf(out).any() and not np.isinf(t.data).any())

    def bw(g):
        return (g,)

    res = _record(out, (t,), bw, target is HALF16)
    res.overflow = overflowed
    return res
