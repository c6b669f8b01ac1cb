"""Adversarial training loop.

Each step takes one shuffled batch and runs a discriminator update on
detached generator output, then a generator update (acoustic + LSGAN +
feature-matching + reversed singer loss) against the freshly updated
discriminators.  Every random draw is keyed by (seed, purpose, indices)
rather than by a shared mutable stream, so a resumed run replays the
exact same draws and the metrics continue bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tape, Tensor
from ..discriminator import (
    DiscConfig,
    LossWeights,
    SubBandSplit,
    acoustic_loss,
    disc_forward,
    feature_match_loss,
    init_discriminator_params,
    lsgan_d_loss,
    lsgan_g_loss,
    segment_crop,
    split_subbands,
    total_generator_loss,
)
from ..eliminator import (
    GrlConfig,
    classify_singer,
    init_eliminator_params,
    loss_was_floored,
    singer_loss,
)
from ..errors import ConfigError, TrainingDiverged
from ..frontend import shipped_lexicon
from ..generator import GeneratorConfig, generator_forward, init_generator_params
from ..params import ParamSet
from ..rng import CounterRng
from .checkpoint import CheckpointState, load_checkpoint, save_checkpoint
from .corpus import CorpusConfig, SyntheticCorpus, make_synthetic_corpus
from .optim import AdamState, LrSchedule, adam_step, lr_at

DIVERGENCE_LIMIT = 1e6
CHECKPOINT_NAME = "checkpoint.xsng"
METRICS_NAME = "metrics.jsonl"

_SECTIONS = {
    "generator": GeneratorConfig,
    "discriminator": DiscConfig,
    "grl": GrlConfig,
    "schedule": LrSchedule,
    "weights": LossWeights,
    "corpus": CorpusConfig,
}


@dataclass
class TrainConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscConfig = field(default_factory=DiscConfig)
    grl: GrlConfig = field(default_factory=GrlConfig)
    schedule: LrSchedule = field(default_factory=LrSchedule)
    weights: LossWeights = field(default_factory=LossWeights)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    steps: int = 2000
    batch_size: int = 8
    seed: int = 0
    eliminator_enabled: bool = True
    eliminator_lr_scale: float = 1.0
    eliminator_restart_every: int = 0  # steps between adversary re-inits; 0 = never
    checkpoint_every: int = 0  # steps between rolling saves; 0 = final only

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.eliminator_lr_scale <= 0:
            raise ConfigError("eliminator_lr_scale must be > 0")
        if self.eliminator_restart_every < 0:
            raise ConfigError("eliminator_restart_every must be >= 0")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        if not isinstance(data, dict):
            raise ConfigError("training config must be a JSON object")
        kwargs = {}
        for key, value in data.items():
            section = _SECTIONS.get(key)
            kwargs[key] = _build_section(section, value, key) if section else value
        return _build_dataclass(cls, kwargs, "config")


def _build_section(section, value, path):
    if not isinstance(value, dict):
        raise ConfigError(f"config section {path!r} must be an object")
    return _build_dataclass(section, value, path)


def _build_dataclass(cls, kwargs: dict, path: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(kwargs) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    return cls(**kwargs)


@dataclass
class TrainResult:
    state: CheckpointState
    metrics: list
    generator_params: ParamSet
    eliminator_params: ParamSet
    discriminator_params: ParamSet
    corpus: SyntheticCorpus


def _mean(terms: list) -> Tensor:
    acc = terms[0]
    for t in terms[1:]:
        acc = ad.add(acc, t)
    return ad.scale(acc, 1.0 / len(terms))


def _prefixed_group(prefix_sets: list) -> ParamSet:
    group = ParamSet()
    for prefix, params in prefix_sets:
        for name, tensor in params.items():
            group.add(prefix + name, tensor)
    return group


def _discriminate(mel: Tensor, crop: tuple, disc_params: ParamSet,
                  split: SubBandSplit, cfg: DiscConfig) -> tuple:
    """Run every discriminator on one mel; returns (scores, feats) lists."""
    scores, feats = [], []
    for b, band in enumerate(split_subbands(mel, split)):
        s, f = disc_forward(band, disc_params, f"detail{b}", cfg)
        scores.append(s)
        feats.append(f)
    lo, hi = crop
    s, f = disc_forward(ad.slice_rows(mel, lo, hi), disc_params, "segment", cfg)
    scores.append(s)
    feats.append(f)
    return scores, feats


def _validate(config: TrainConfig, lexicon) -> None:
    gen = config.generator
    if gen.phoneme_vocab != lexicon.vocab_size:
        raise ConfigError(f"generator.phoneme_vocab {gen.phoneme_vocab} != "
                          f"lexicon vocab size {lexicon.vocab_size}")
    if gen.singer_count != config.corpus.singer_count:
        raise ConfigError("generator.singer_count != corpus.singer_count")
    if gen.language_count < config.corpus.language_count:
        raise ConfigError("generator.language_count < corpus.language_count")
    if gen.mel_bins % config.discriminator.band_count != 0:
        raise ConfigError("mel_bins must divide evenly into detail bands")
    band_width = gen.mel_bins // config.discriminator.band_count
    if band_width < config.discriminator.kernel:
        raise ConfigError(f"detail bands are {band_width} bins wide, narrower "
                          f"than the {config.discriminator.kernel}-tap kernel")


def _restore(state: CheckpointState, config: TrainConfig, groups: dict,
             opts: dict) -> int:
    stored = dict(state.meta.get("config", {}))
    current = config.to_dict()
    # Resuming with a larger step budget is the point of resuming; every
    # other field must match or the run would not be a continuation.
    stored.pop("steps", None)
    current.pop("steps", None)
    if stored != current:
        raise ConfigError("checkpoint was written with a different config")
    for prefix, params in groups.items():
        arrays = {name[len(prefix):]: arr for name, arr in state.tensors.items()
                  if name.startswith(prefix) and not name.startswith("opt.")}
        params.load_arrays(arrays)
    for opt_prefix, (opt, group) in opts.items():
        opt.step = int(state.meta[opt_prefix.strip(".") + "_step"])
        for name, _ in group.items():
            m = state.tensors.get(f"{opt_prefix}m.{name}")
            v = state.tensors.get(f"{opt_prefix}v.{name}")
            if m is not None:
                opt.m[name] = np.array(m)
                opt.v[name] = np.array(v)
    return int(state.meta["step"])


def _snapshot(config: TrainConfig, step: int, groups: dict, opts: dict,
              seed_rng: CounterRng) -> CheckpointState:
    tensors = {}
    for prefix, params in groups.items():
        for name, t in params.items():
            tensors[prefix + name] = np.array(t.data)
    meta = {"step": step, "config": config.to_dict(), "rng": seed_rng.state()}
    for opt_prefix, (opt, group) in opts.items():
        meta[opt_prefix.strip(".") + "_step"] = opt.step
        for name, _ in group.items():
            if name in opt.m:
                tensors[f"{opt_prefix}m.{name}"] = np.array(opt.m[name])
                tensors[f"{opt_prefix}v.{name}"] = np.array(opt.v[name])
    return CheckpointState(tensors=tensors, meta=meta)


def train(config: TrainConfig, out_dir=None, resume_from=None,
          on_step=None) -> TrainResult:
    """Run the loop for config.steps steps (or the remainder after resume).

    out_dir, when given, receives metrics.jsonl (appended on resume) and
    checkpoint.xsng.  resume_from is a checkpoint path or state to
    continue from.  on_step is called with each metrics record.
    """
    lexicon = shipped_lexicon()
    _validate(config, lexicon)
    corpus = make_synthetic_corpus(config.corpus, config.seed, lexicon,
                                   config.generator.mel_bins)
    root = CounterRng(config.seed)

    gen_params = init_generator_params(config.generator, root)
    elim_params = init_eliminator_params(config.generator.hidden_dim,
                                         config.generator.singer_count,
                                         config.generator.conv_kernel, root)
    disc_params = init_discriminator_params(config.discriminator, root)

    # The eliminator trains on its own clock: as the adversary it must
    # track the moving encoder, so its learning rate carries a separate
    # multiplier (two-timescale scheme, like the discriminator group).
    g_group = _prefixed_group([("gen.", gen_params)])
    e_group = _prefixed_group([("eliminator.", elim_params)])
    d_group = _prefixed_group([("disc.", disc_params)])
    g_opt, e_opt, d_opt = AdamState(), AdamState(), AdamState()

    groups = {"gen.": gen_params, "eliminator.": elim_params, "disc.": disc_params}
    opts = {"opt.g.": (g_opt, g_group), "opt.e.": (e_opt, e_group),
            "opt.d.": (d_opt, d_group)}

    start_step = 0
    if resume_from is not None:
        state = (resume_from if isinstance(resume_from, CheckpointState)
                 else load_checkpoint(resume_from))
        start_step = _restore(state, config, groups, opts)

    split = SubBandSplit.even(config.discriminator.band_count,
                              config.generator.mel_bins)
    use_gan = config.weights.adversarial > 0 or config.weights.feature_match > 0
    use_elim = config.eliminator_enabled and config.weights.singer > 0
    batches = math.ceil(len(corpus) / config.batch_size)
    warmup_epochs = config.schedule.warmup_steps // batches

    out_path = Path(out_dir) if out_dir is not None else None
    metrics_fh = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        mode = "a" if start_step > 0 else "w"
        metrics_fh = (out_path / METRICS_NAME).open(mode, encoding="utf-8")

    metrics = []
    try:
        for step in range(start_step, config.steps):
            restart = config.eliminator_restart_every
            if use_elim and restart and step and step % restart == 0:
                # Fresh adversary: a reversal-trained encoder can silence one
                # classifier by driving it into a dead-ReLU corner or by
                # making features anti-informative for it; re-initializing
                # the classifier on a fixed cadence means only genuinely
                # scrubbed features survive every generation.  Draws are
                # keyed by step, so resumed runs restart identically.
                fresh = init_eliminator_params(
                    config.generator.hidden_dim, config.generator.singer_count,
                    config.generator.conv_kernel, root.substream("restart", step))
                for name, tensor in elim_params.items():
                    tensor.data = fresh[name].data
                e_opt.m.clear()
                e_opt.v.clear()
                e_opt.step = 0
            epoch = step // batches
            order = root.substream("shuffle", epoch).permutation(len(corpus))
            lo = (step % batches) * config.batch_size
            batch = [int(i) for i in order[lo:lo + config.batch_size]]
            post_epochs = max(0, epoch - warmup_epochs) if step >= config.schedule.warmup_steps else 0
            lr = lr_at(step, post_epochs, config.schedule)
            lam = config.grl.value(step)
            crops = {i: segment_crop(corpus.items[i].target_mel.shape[0],
                                     config.discriminator,
                                     root.substream("crop", step, i))
                     for i in batch}

            d_value = 0.0
            if use_gan:
                # Detached fakes: forward without a tape, then treat the
                # mel values as constants for the discriminator update.
                fakes = {}
                for i in batch:
                    item = corpus.items[i]
                    out = generator_forward(
                        item.sequence, item.language_id, item.singer_id,
                        gen_params, config.generator, training=True,
                        teacher_durations=item.sequence.durations)
                    fakes[i] = out.mel.data
                with Tape() as tape:
                    real_scores, fake_scores = [], []
                    for i in batch:
                        item = corpus.items[i]
                        r, _ = _discriminate(Tensor(item.target_mel), crops[i],
                                             disc_params, split, config.discriminator)
                        f, _ = _discriminate(Tensor(fakes[i]), crops[i],
                                             disc_params, split, config.discriminator)
                        real_scores.extend(r)
                        fake_scores.extend(f)
                    d_loss = lsgan_d_loss(real_scores, fake_scores)
                    d_value = float(d_loss.item())
                    _check_divergence({"d_loss": d_value}, step, out_path)
                    tape.backward(d_loss)
                    adam_step(d_group, d_group.gradients(tape), d_opt, lr)

            with Tape() as tape:
                acoustic_terms, singer_terms, mel_l1_values = [], [], []
                fake_scores, real_feats, fake_feats = [], [], []
                floored = False
                for i in batch:
                    item = corpus.items[i]
                    out = generator_forward(
                        item.sequence, item.language_id, item.singer_id,
                        gen_params, config.generator, training=True,
                        teacher_durations=item.sequence.durations)
                    acoustic_terms.append(acoustic_loss(
                        out.mel, item.target_mel, out.predicted_log_durations,
                        item.sequence.durations))
                    mel_l1_values.append(
                        float(np.mean(np.abs(out.mel.data - item.target_mel))))
                    if use_gan:
                        s, f = _discriminate(out.mel, crops[i], disc_params,
                                             split, config.discriminator)
                        fake_scores.extend(s)
                        fake_feats.extend(f)
                        _, rf = _discriminate(Tensor(item.target_mel), crops[i],
                                              disc_params, split,
                                              config.discriminator)
                        real_feats.extend(rf)
                    if use_elim:
                        probs = classify_singer(out.encoder_out, elim_params, lam)
                        singer_terms.append(singer_loss(probs, item.singer_id))
                        floored = floored or loss_was_floored(probs, item.singer_id)

                l_a = _mean(acoustic_terms)
                l_adv = lsgan_g_loss(fake_scores) if use_gan else Tensor(0.0)
                l_f = (feature_match_loss(real_feats, fake_feats)
                       if use_gan else Tensor(0.0))
                l_s = _mean(singer_terms) if use_elim else Tensor(0.0)

                record = {
                    "step": step + 1,
                    "epoch": epoch,
                    "lr": lr,
                    "L_a": float(l_a.item()),
                    "L_adv": float(l_adv.item()),
                    "L_f": float(l_f.item()),
                    "L_s": float(l_s.item()),
                    "d_loss": d_value,
                    "mel_l1": float(np.mean(mel_l1_values)),
                }
                _check_divergence(record, step, out_path)
                if floored:
                    record["singer_loss_floored"] = True

                total = total_generator_loss(l_a, l_adv, l_f, l_s, config.weights)
                tape.backward(total)
                adam_step(g_group, g_group.gradients(tape), g_opt, lr)
                adam_step(e_group, e_group.gradients(tape), e_opt,
                          lr * config.eliminator_lr_scale)

            metrics.append(record)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")
                metrics_fh.flush()
            if on_step is not None:
                on_step(record)
            if (out_path is not None and config.checkpoint_every
                    and (step + 1) % config.checkpoint_every == 0
                    and step + 1 < config.steps):
                save_checkpoint(_snapshot(config, step + 1, groups, opts, root),
                                out_path / CHECKPOINT_NAME)
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    state = _snapshot(config, config.steps, groups, opts, root)
    if out_path is not None:
        save_checkpoint(state, out_path / CHECKPOINT_NAME)
    return TrainResult(state=state, metrics=metrics, generator_params=gen_params,
                       eliminator_params=elim_params,
                       discriminator_params=disc_params, corpus=corpus)


def _check_divergence(values: dict, step: int, out_path) -> None:
    bad = {k: v for k, v in values.items()
           if isinstance(v, float) and (not math.isfinite(v) or abs(v) > DIVERGENCE_LIMIT)}
    if not bad:
        return
    diagnostics = {"step": step, "losses": values}
    if out_path is not None:
        (out_path / "divergence.json").write_text(
            json.dumps(diagnostics, sort_keys=True, indent=2), encoding="utf-8")
    names = ", ".join(f"{k}={v!r}" for k, v in bad.items())
    raise TrainingDiverged(f"training diverged at step {step}: {names}",
                           diagnostics=diagnostics)
