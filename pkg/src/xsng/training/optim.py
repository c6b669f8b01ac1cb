"""Adam with warmup-then-epoch-decay learning rate.

The schedule ramps linearly from warmup_start to peak over the warmup
steps, then multiplies by epoch_decay once per completed epoch counted
from the end of warmup.  Decay is applied by repeated multiplication,
not a power, so consecutive epochs differ by exactly the decay factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError, NumericError
from ..params import ParamSet


@dataclass
class LrSchedule:
    warmup_start: float = 1e-4
    peak: float = 1e-2
    warmup_steps: int = 5000
    epoch_decay: float = 0.99

    def __post_init__(self):
        if self.warmup_start <= 0 or self.peak <= 0:
            raise ConfigError("learning rates must be positive")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be >= 0")
        if not 0.0 < self.epoch_decay <= 1.0:
            raise ConfigError("epoch_decay must be in (0, 1]")


def lr_at(step: int, post_warmup_epochs: int, sched: LrSchedule) -> float:
    """Learning rate at a global step.

    post_warmup_epochs counts epochs completed after warmup finished;
    pass 0 while warmup is still running.  At step == warmup_steps the
    rate is the peak exactly (the ramp branch never computes it).
    """
    if step < 0 or post_warmup_epochs < 0:
        raise ContractError("step and epoch counts must be >= 0")
    if step < sched.warmup_steps:
        frac = step / sched.warmup_steps
        return sched.warmup_start + (sched.peak - sched.warmup_start) * frac
    lr = sched.peak
    for _ in range(post_warmup_epochs):
        lr *= sched.epoch_decay
    return lr


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-9
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParamSet, grads: dict, state: AdamState, lr: float):
    """One bias-corrected Adam update over every parameter in the set.

    Parameters with zero gradient still advance their moment estimates
    (standard Adam; stale momentum decays instead of freezing).
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, tensor in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        tensor.data = tensor.data - lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
