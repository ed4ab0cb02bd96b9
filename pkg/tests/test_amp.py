import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adgsyn import tensor as T
from adgsyn.amp import MIN_SCALE, LossScaler, scaled_backward
from adgsyn.errors import ScaleUnderflow
from adgsyn.tensor import AMP_POLICY, Parameter, Tape, Tensor, autocast


def test_halves_on_overflow_and_resets_counter():
    s = LossScaler(scale=1024.0, growth_interval=3)
    s.update(True)
    s.update(False)
    assert s.scale == 512.0 and s.steps_since_overflow == 0


def test_doubles_after_growth_interval():
    s = LossScaler(scale=2.0 ** 16, growth_interval=2000)
    for _ in range(1999):
        s.update(True)
    assert s.scale == 2.0 ** 16
    s.update(True)
    assert s.scale == 2.0 ** 17 and s.steps_since_overflow == 0


def test_underflow_raises():
    s = LossScaler(scale=MIN_SCALE)
    with pytest.raises(ScaleUnderflow):
        s.update(False)


def test_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        LossScaler(scale=1000.0)


def test_disabled_scaler_is_inert():
    s = LossScaler(enabled=False)
    s.update(False)
    assert s.scale == 2.0 ** 16


@given(st.lists(st.booleans(), max_size=60))
def test_scale_stays_power_of_two(events):
    s = LossScaler(scale=2.0 ** 10, growth_interval=4)
    for ok in events:
        s.update(ok)
    assert np.log2(s.scale) == int(np.log2(s.scale))


def _half_loss(p, x):
    with Tape() as tape, autocast(AMP_POLICY):
        loss = T.sum(x @ p)
    return tape, loss


def test_scaled_backward_unscales():
    p = Parameter(np.full((2, 1), 0.5))
    x = Tensor(np.float32([[1.0, 2.0]]))
    tape, loss = _half_loss(p, x)
    assert scaled_backward(tape, loss, LossScaler(scale=256.0))
    np.testing.assert_allclose(p.grad[:, 0], [1.0, 2.0])


def test_scaled_backward_flags_overflow_and_zeroes():
    p = Parameter(np.full((2, 1), 0.5))
    x = Tensor(np.float32([[1000.0, 2.0]]))
    tape, loss = _half_loss(p, x)
    # 1000 * 2^16 does not fit in binary16
    assert not scaled_backward(tape, loss, LossScaler(scale=2.0 ** 16))
    assert (p.grad == 0).all()


def test_small_gradients_survive_only_with_scaling():
    # d loss / d p = 1e-4 * 1e-4, below half the smallest binary16 subnormal
    x = Tensor(np.float32([[1e-4]]))

    def grad(scaler):
        p = Parameter(np.full((1, 1), 0.5))
        with Tape() as tape, autocast(AMP_POLICY):
            loss = T.sum(x @ p) * 1e-4
        scaled_backward(tape, loss, scaler)
        return float(p.grad[0, 0])

    assert grad(LossScaler(enabled=False)) == 0.0
    assert grad(LossScaler(scale=2.0 ** 12)) == pytest.approx(1e-8, rel=1e-2)
