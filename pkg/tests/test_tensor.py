import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adgsyn import tensor as T
from adgsyn.errors import AllMasked, BackwardWithoutGraph, ShapeMismatch
from adgsyn.tensor import AMP_POLICY, HALF16, SINGLE32, MemoryLedger, Parameter, PrecisionPolicy, Tape, Tensor, autocast

TINY = float(np.float32(1e-4))
finite32 = st.floats(-1e6, 1e6, width=32, allow_nan=False)


def test_cast_rounds_to_nearest_half():
    t = T.cast(Tensor(np.float32([0.1])), HALF16)
    assert t.precision is HALF16
    assert float(t.data[0]) == 0.0999755859375
    assert not t.overflow


def test_cast_overflow_sets_flag():
    t = T.cast(Tensor(np.float32([65520.0, 1.0])), HALF16)
    assert np.isinf(t.data[0]) and t.data[1] == 1.0
    assert t.overflow


def test_cast_back_to_single_is_exact():
    h = T.cast(Tensor(np.float32([0.1, -3.5])), HALF16)
    s = T.cast(h, SINGLE32)
    assert s.precision is SINGLE32
    np.testing.assert_array_equal(s.data, h.data.astype(np.float32))


@given(arrays(np.float32, st.integers(1, 64), elements=finite32))
def test_to_half_matches_numpy(a):
    with np.errstate(over="ignore"):
        want = a.astype(np.float16)
    np.testing.assert_array_equal(T.to_half(a).view(np.uint16), want.view(np.uint16))


@given(arrays(np.float32, st.integers(1, 64), elements=st.floats(-TINY, TINY, width=32)))
def test_round_half_subnormals(a):
    np.testing.assert_array_equal(T.round_half(a), a.astype(np.float16).astype(np.float32))


def test_backward_matmul_and_broadcast():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(3, 4)).astype(np.float32), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 2)).astype(np.float32), requires_grad=True)
    b = Tensor(rng.normal(size=(2,)).astype(np.float32), requires_grad=True)
    with Tape() as tape:
        loss = T.sum((x @ w + b) * 2.0)
    tape.backward(loss)
    np.testing.assert_allclose(b.grad, [6.0, 6.0], rtol=1e-6)
    np.testing.assert_allclose(w.grad, 2 * x.data.sum(0)[:, None].repeat(2, 1), rtol=1e-5)
    np.testing.assert_allclose(x.grad, 2 * np.tile(w.data.sum(1), (3, 1)), rtol=1e-5)


def test_gradients_accumulate_over_reuse():
    x = Tensor(np.float32([2.0]), requires_grad=True)
    with Tape() as tape:
        y = T.sum(x * x + x)
    tape.backward(y)
    assert x.grad[0] == pytest.approx(5.0)


def test_backward_without_tape():
    y = Tensor(np.float32([1.0]), requires_grad=True) * 2.0
    with pytest.raises(BackwardWithoutGraph):
        T.backward(y)


def test_backward_needs_scalar():
    x = Tensor(np.ones(3, np.float32), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ShapeMismatch):
        tape.backward(y)


def test_incompatible_broadcast_raises():
    with pytest.raises(ShapeMismatch):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_softmax_mask_and_all_masked():
    x = Tensor(np.float32([[1.0, 2.0, 3.0]]))
    p = T.softmax(x, mask=np.array([[False, True, False]]))
    assert p.data[0, 1] == 0.0
    assert p.data.sum() == pytest.approx(1.0)
    with pytest.raises(AllMasked):
        T.softmax(x, mask=np.ones((1, 3), bool))


def test_autocast_runs_matmul_in_half_and_softmax_in_single():
    x = Tensor(np.float32([[0.1, 0.2]]))
    w = Parameter(np.float32([[1.0], [1.0]]))
    with autocast(AMP_POLICY):
        y = x @ w
        s = T.softmax(x)
    assert y.precision is HALF16
    assert s.precision is SINGLE32


def test_policy_rejects_half_softmax():
    with pytest.raises(ValueError):
        PrecisionPolicy(half_ops={"softmax"}, full_ops={"loss", "grad_accumulate", "update"})


def test_uncastable_operand_falls_back_to_single():
    big = Tensor(np.float32([[1e6]]))
    with autocast(AMP_POLICY):
        y = big @ Tensor(np.float32([[1.0]]))
    assert y.precision is SINGLE32 and y.data[0, 0] == 1e6


def test_parameter_shadow_follows_assign():
    p = Parameter(np.zeros(2))
    p.assign([0.1, 2.0])
    assert p.shadow.dtype == np.float16
    np.testing.assert_array_equal(p.shadow, np.float16([0.1, 2.0]))


def test_ledger_counts_half_at_two_bytes():
    x = Tensor(np.ones((10, 10), np.float32))
    with MemoryLedger() as ledger, autocast(AMP_POLICY):
        y = x * 2.0
    assert y.precision is HALF16
    assert ledger.allocated_bytes == 200


def test_half_gradients_are_binary16_values():
    rng = np.random.default_rng(1)
    x = Parameter(rng.normal(size=(4, 3)))
    with Tape() as tape, autocast(AMP_POLICY):
        loss = T.sum(T.relu(Tensor(rng.normal(size=(2, 4)).astype(np.float32)) @ x))
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, x.grad.astype(np.float16).astype(np.float32))
