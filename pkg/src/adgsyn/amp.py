"""Dynamic loss scaling for mixed-precision training."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ScaleUnderflow
from .tensor import Tape, Tensor

MIN_SCALE = 2.0 ** -24


def _is_power_of_two(x: float) -> bool:
    return x > 0 and math.frexp(x)[0] == 0.5


@dataclass
class LossScaler:
    scale: float = 2.0 ** 16
    growth_interval: int = 2000
    steps_since_overflow: int = 0
    enabled: bool = True

    def __post_init__(self):
        if not _is_power_of_two(self.scale):
            raise ValueError(f"loss scale must be a positive power of two, got {self.scale}")
        if self.growth_interval < 1:
            raise ValueError("growth_interval must be >= 1")

    def update(self, grads_valid: bool) -> "LossScaler":
        """Halve on overflow, double after ``growth_interval`` clean steps."""
        if not self.enabled:
            return self
        if not grads_valid:
            if self.scale / 2 < MIN_SCALE:
                raise ScaleUnderflow(f"loss scale would drop below 2^-24 (currently {self.scale})")
            self.scale /= 2
            self.steps_since_overflow = 0
            return self
        self.steps_since_overflow += 1
        if self.steps_since_overflow >= self.growth_interval:
            self.scale *= 2
            self.steps_since_overflow = 0
        return self

    def state_dict(self):
        return {"scale": self.scale, "growth_interval": self.growth_interval,
                "steps_since_overflow": self.steps_since_overflow, "enabled": self.enabled}


def scaler_update(scaler: LossScaler, grads_valid: bool) -> LossScaler:
    return scaler.update(grads_valid)


def scaled_backward(tape: Tape, loss: Tensor, scaler: LossScaler) -> bool:
    """Backward on ``loss * scale``, unscale in Single32, zero everything on overflow.

    Returns ``grads_valid``. Seeding the backward with ``scale`` is the same
    computation as differentiating ``loss * scale`` and keeps the scaled
    product out of Half16.
    """
    scale = scaler.scale if scaler.enabled else 1.0
    # overflow is expected and detected below, so inf/nan arithmetic stays quiet
    with np.errstate(over="ignore", invalid="ignore"):
        tape.backward(loss, grad_seed=scale)
    leaves = tape.leaves
    inv = np.float32(1.0 / scale)
    valid = True
    for p in leaves:
        if scale != 1.0:
            p.grad = p.grad * inv
        if valid and not np.isfinite(p.grad).all():
            valid = False
    if not valid:
        for p in leaves:
            p.grad = np.zeros_like(p.grad)
    return valid
