"""Post-hoc singer identification probe.

Trains a fresh classifier (same topology as the bias eliminator, no
gradient reversal) on frozen encoder features and reports held-out
accuracy.  High accuracy means singer identity survives in the encoder;
accuracy near chance means the eliminator removed it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tape, Tensor
from ..eliminator import classify_singer, init_eliminator_params, singer_loss
from ..errors import ConfigError
from ..generator import GeneratorConfig, generator_forward
from ..params import ParamSet
from ..rng import CounterRng
from .corpus import SyntheticCorpus
from .loop import _mean
from .optim import AdamState, adam_step


@dataclass
class ProbeConfig:
    steps: int = 500
    batch_size: int = 8
    lr: float = 1e-3
    holdout_every: int = 4  # every k-th item is held out
    seed: int = 97

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.holdout_every < 2:
            raise ConfigError("holdout_every must be >= 2")


@dataclass
class ProbeResult:
    accuracy: float        # held-out
    train_accuracy: float
    held_out: int
    trained_on: int


def encoder_features(gen_params: ParamSet, gen_cfg: GeneratorConfig,
                     corpus: SyntheticCorpus) -> list:
    """Frozen encoder output per corpus item, taken before singer injection."""
    feats = []
    for item in corpus.items:
        out = generator_forward(item.sequence, item.language_id, item.singer_id,
                                gen_params, gen_cfg, training=True,
                                teacher_durations=item.sequence.durations)
        feats.append(np.array(out.encoder_out.data))
    return feats


def _accuracy(indices, feats, labels, params) -> float:
    hits = 0
    for i in indices:
        probs = classify_singer(Tensor(feats[i]), params, 0.0)
        hits += int(np.argmax(probs.data)) == labels[i]
    return hits / len(indices)


def probe_singer_accuracy(gen_params: ParamSet, gen_cfg: GeneratorConfig,
                          corpus: SyntheticCorpus,
                          cfg: ProbeConfig | None = None) -> ProbeResult:
    cfg = cfg or ProbeConfig()
    feats = encoder_features(gen_params, gen_cfg, corpus)
    labels = [item.singer_id for item in corpus.items]
    held = [i for i in range(len(corpus)) if i % cfg.holdout_every == 0]
    trained = [i for i in range(len(corpus)) if i % cfg.holdout_every != 0]
    if not held or not trained:
        raise ConfigError("holdout split left one side empty")

    rng = CounterRng(cfg.seed)
    params = init_eliminator_params(gen_cfg.hidden_dim, gen_cfg.singer_count,
                                    gen_cfg.conv_kernel, rng)
    opt = AdamState()
    batches = max(1, (len(trained) + cfg.batch_size - 1) // cfg.batch_size)
    for step in range(cfg.steps):
        epoch = step // batches
        order = rng.substream("probe-shuffle", epoch).permutation(len(trained))
        lo = (step % batches) * cfg.batch_size
        batch = [trained[int(j)] for j in order[lo:lo + cfg.batch_size]]
        with Tape() as tape:
            losses = [singer_loss(classify_singer(Tensor(feats[i]), params, 0.0),
                                  labels[i]) for i in batch]
            loss = _mean(losses)
            tape.backward(loss)
            adam_step(params, params.gradients(tape), opt, cfg.lr)

    return ProbeResult(accuracy=_accuracy(held, feats, labels, params),
                       train_accuracy=_accuracy(trained, feats, labels, params),
                       held_out=len(held), trained_on=len(trained))
