"""Multi-band mel discriminators and the training losses.

The mel spectrum is split into contiguous sub-bands; each band gets a
detail discriminator and the full band a segment discriminator that
sees a random fixed-length crop.  All discriminators share one
topology: three same-padded 2-d convolutions with LeakyReLU between,
ending in a single-channel score map (least-squares GAN, no sigmoid).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, NumericError, ShapeError
from .params import ParamSet
from .rng import CounterRng


@dataclass
class SubBandSplit:
    """Contiguous half-open [lo, hi) column ranges partitioning the mel bins."""
    edges: list[tuple[int, int]]

    def __post_init__(self):
        if not self.edges:
            raise ConfigError("sub-band split needs at least one band")
        lo0 = self.edges[0][0]
        if lo0 != 0:
            raise ConfigError("first band must start at bin 0")
        for (alo, ahi), (blo, bhi) in zip(self.edges, self.edges[1:]):
            if ahi != blo:
                raise ConfigError(f"bands [{alo},{ahi}) and [{blo},{bhi}) do not abut")
        if any(hi <= lo for lo, hi in self.edges):
            raise ConfigError("every band must be non-empty")

    @property
    def band_count(self) -> int:
        return len(self.edges)

    @property
    def total_bins(self) -> int:
        return self.edges[-1][1]

    @classmethod
    def even(cls, band_count: int, mel_bins: int) -> "SubBandSplit":
        if mel_bins % band_count != 0:
            raise ConfigError(f"{mel_bins} bins do not split evenly into "
                              f"{band_count} bands")
        width = mel_bins // band_count
        return cls([(b * width, (b + 1) * width) for b in range(band_count)])


def split_subbands(mel: Tensor, split: SubBandSplit) -> list[Tensor]:
    if mel.ndim != 2 or mel.shape[1] != split.total_bins:
        raise ShapeError(f"mel shape {mel.shape} does not match split over "
                         f"{split.total_bins} bins")
    return [ad.slice_cols(mel, lo, hi) for lo, hi in split.edges]


@dataclass
class DiscConfig:
    band_count: int = 2
    channels: int = 8
    kernel: int = 3
    leaky_slope: float = 0.2
    segment_frames: int = 32

    def __post_init__(self):
        if self.kernel % 2 == 0:
            raise ConfigError("kernel must be odd (same padding)")
        for name in ("band_count", "channels", "kernel", "segment_frames"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass
class LossWeights:
    adversarial: float = 1.0
    feature_match: float = 1.0
    singer: float = 0.5


def init_discriminator_params(cfg: DiscConfig, rng: CounterRng) -> ParamSet:
    """One parameter group per discriminator: detail0..detailN, segment."""
    p = ParamSet()
    names = [f"detail{b}" for b in range(cfg.band_count)] + ["segment"]
    c, k = cfg.channels, cfg.kernel
    for name in names:
        shapes = [(c, 1, k, k), (c, c, k, k), (1, c, k, k)]
        for i, shape in enumerate(shapes, start=1):
            scale = 1.0 / np.sqrt(shape[1] * k * k)
            p.add(f"{name}.conv{i}", rng.substream("init", f"disc.{name}.conv{i}")
                  .normal(shape, scale))
    return p


def disc_forward(x: Tensor, params: ParamSet, prefix: str,
                 cfg: DiscConfig) -> tuple[Tensor, list[Tensor]]:
    """Score map and per-layer feature maps for one discriminator.

    x is a (frames, bins) patch; the final conv output doubles as the
    last feature map, so the list length equals the conv layer count.
    """
    if x.ndim != 2:
        raise ShapeError(f"discriminator input must be rank 2, got {x.shape}")
    h = ad.reshape(x, (1, x.shape[0], x.shape[1]))
    feats = []
    h = ad.leaky_relu(ad.conv2d(h, params[prefix + ".conv1"]), cfg.leaky_slope)
    feats.append(h)
    h = ad.leaky_relu(ad.conv2d(h, params[prefix + ".conv2"]), cfg.leaky_slope)
    feats.append(h)
    score = ad.conv2d(h, params[prefix + ".conv3"])
    feats.append(score)
    return ad.reshape(score, (x.shape[0], x.shape[1])), feats


def segment_crop(frames: int, cfg: DiscConfig, rng: CounterRng) -> tuple[int, int]:
    """Start/end of the segment discriminator's crop for a clip of
    `frames` frames.  Shorter clips are used whole."""
    length = min(cfg.segment_frames, frames)
    lo = 0 if frames == length else int(rng.integers(0, frames - length + 1, ()))
    return lo, lo + length


# ------------------------------------------------------------------ losses

def lsgan_d_loss(real_scores: list[Tensor], fake_scores: list[Tensor]) -> Tensor:
    """Least-squares discriminator loss, mean over discriminators."""
    if len(real_scores) != len(fake_scores) or not real_scores:
        raise ContractError("need matching non-empty real/fake score lists")
    terms = []
    for r, f in zip(real_scores, fake_scores):
        real_term = ad.mean_all(ad.square(ad.add_scalar(r, -1.0)))
        fake_term = ad.mean_all(ad.square(f))
        terms.append(ad.scale(ad.add(real_term, fake_term), 0.5))
    return _mean_scalars(terms)


def lsgan_g_loss(fake_scores: list[Tensor]) -> Tensor:
    """Least-squares generator loss: fakes should score 1."""
    if not fake_scores:
        raise ContractError("need at least one fake score")
    terms = [ad.scale(ad.mean_all(ad.square(ad.add_scalar(f, -1.0))), 0.5)
             for f in fake_scores]
    return _mean_scalars(terms)


def feature_match_loss(real_feats: list[list[Tensor]],
                       fake_feats: list[list[Tensor]]) -> Tensor:
    """Mean absolute feature difference, averaged over layers then
    discriminators.  Layer counts and shapes must pair up exactly."""
    if len(real_feats) != len(fake_feats) or not real_feats:
        raise ContractError("need matching non-empty feature lists")
    per_disc = []
    for rs, fs in zip(real_feats, fake_feats):
        if len(rs) != len(fs):
            raise ShapeError(f"feature layer counts differ: {len(rs)} vs {len(fs)}")
        layers = []
        for r, f in zip(rs, fs):
            if r.shape != f.shape:
                raise ShapeError(f"feature shapes differ: {r.shape} vs {f.shape}")
            layers.append(ad.mean_all(ad.absolute(ad.sub(f, r))))
        per_disc.append(_mean_scalars(layers))
    return _mean_scalars(per_disc)


DURATION_LOG_OFFSET = 1e-8


def acoustic_loss(pred_mel: Tensor, target_mel: np.ndarray,
                  pred_log_durations: Tensor, target_durations) -> Tensor:
    """L1 on mel plus squared error on log durations."""
    target = np.asarray(target_mel, dtype=np.float64)
    if pred_mel.shape != target.shape:
        raise ShapeError(f"mel shapes differ: {pred_mel.shape} vs {target.shape}")
    td = np.asarray(target_durations, dtype=np.float64)
    if pred_log_durations.shape != td.shape:
        raise ShapeError(f"duration shapes differ: {pred_log_durations.shape} "
                         f"vs {td.shape}")
    mel_term = ad.mean_all(ad.absolute(ad.sub(pred_mel, Tensor(target))))
    log_target = Tensor(np.log(td + DURATION_LOG_OFFSET))
    dur_term = ad.mean_all(ad.square(ad.sub(pred_log_durations, log_target)))
    return ad.add(mel_term, dur_term)


def total_generator_loss(acoustic: Tensor, adversarial: Tensor,
                         feature_match: Tensor, singer: Tensor,
                         weights: LossWeights) -> Tensor:
    for name, part in (("acoustic", acoustic), ("adversarial", adversarial),
                       ("feature_match", feature_match), ("singer", singer)):
        if not np.isfinite(part.data):
            raise NumericError(f"{name} loss is non-finite")
    total = ad.add(acoustic, ad.scale(adversarial, weights.adversarial))
    total = ad.add(total, ad.scale(feature_match, weights.feature_match))
    return ad.add(total, ad.scale(singer, weights.singer))


def _mean_scalars(terms: list[Tensor]) -> Tensor:
    acc = terms[0]
    for t in terms[1:]:
        acc = ad.add(acc, t)
    return ad.scale(acc, 1.0 / len(terms))
