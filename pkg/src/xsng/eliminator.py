"""Adversarial singer-identity branch.

A gradient reversal layer feeds the encoder output into a small singer
classifier: three 1-d convolutions with ReLU, average pooling over
time, and a linear layer with softmax.  The classifier itself learns to
identify the singer; the reversed gradient teaches the encoder to make
that impossible.  Crucially the branch taps the encoder *before* the
singer embedding is added, so there is something to eliminate and
nothing legitimate to leak.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .params import ParamSet
from .rng import CounterRng

PROB_FLOOR = 1e-12


@dataclass
class GrlConfig:
    """Gradient reversal strength, optionally ramped over early steps."""
    lam: float = 1.0
    ramp_steps: int = 0  # 0 disables the ramp

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.ramp_steps < 0:
            raise ConfigError("ramp_steps must be >= 0")

    def value(self, step: int) -> float:
        if self.ramp_steps and step < self.ramp_steps:
            return self.lam * (step / self.ramp_steps)
        return self.lam


def init_eliminator_params(hidden_dim: int, singer_count: int, kernel: int,
                           rng: CounterRng) -> ParamSet:
    p = ParamSet()
    k_scale = 1.0 / np.sqrt(hidden_dim * kernel)
    for i in (1, 2, 3):
        p.add(f"conv{i}", rng.substream("init", f"elim.conv{i}").normal(
            (hidden_dim, hidden_dim, kernel), k_scale))
    p.add("w", rng.substream("init", "elim.w").normal(
        (hidden_dim, singer_count), 1.0 / np.sqrt(hidden_dim)))
    return p


grl = ad.gradient_reversal


def classify_singer(encoder_out: Tensor, params: ParamSet,
                    lam: float) -> Tensor:
    """Singer probabilities (S,) from encoder output (T, d).

    Set lam to 0.0 to train the classifier without pushing back on the
    encoder (the probe configuration); any positive lam turns the
    branch adversarial.
    """
    if encoder_out.ndim != 2:
        raise ContractError(f"encoder output must be (T, d), got {encoder_out.shape}")
    h = ad.transpose(grl(encoder_out, lam))
    for i in (1, 2, 3):
        h = ad.relu(ad.conv1d(h, params[f"conv{i}"], padding="same"))
    pooled = ad.mean_rows(ad.transpose(h))  # average over time, (d,)
    logits = ad.reshape(ad.matmul(ad.reshape(pooled, (1, encoder_out.shape[1])),
                                  params["w"]), (params["w"].shape[1],))
    return ad.softmax(logits)


def singer_loss(probabilities: Tensor, true_singer: int) -> Tensor:
    """Negative log probability of the true singer.

    Probabilities are floored at 1e-12 before the log so a collapsed
    softmax cannot produce an infinite loss; the training loop reports
    when the floor fires.
    """
    if probabilities.ndim != 1:
        raise ContractError(f"probabilities must be rank 1, got {probabilities.shape}")
    if not 0 <= true_singer < probabilities.shape[0]:
        raise ContractError(f"true_singer {true_singer} out of range for "
                            f"{probabilities.shape[0]} singers")
    p = ad.clamp_min(ad.pick(probabilities, true_singer), PROB_FLOOR)
    return ad.neg(ad.log(p))


def loss_was_floored(probabilities: Tensor, true_singer: int) -> bool:
    return float(probabilities.data[true_singer]) <= PROB_FLOOR
