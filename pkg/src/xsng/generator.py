"""Acoustic generator: phoneme/pitch/duration embeddings -> mel frames.

The encoder and decoder are stacks of identical blocks: multi-head
self-attention plus parallel 1-d convolution branches feed a residual
sum into layer normalization, then a position-wise feed-forward with a
second normalization.  The second normalization of the first encoder
block is conditional: its scale and bias are linear functions of the
language embedding, which is the only place language information enters
the network.  Singer identity is added after the encoder output tap so
the adversarial branch upstream never sees it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .frontend import SequenceTriple
from .params import ParamSet
from .rng import CounterRng

DURATION_BUCKETS = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64)


@dataclass
class GeneratorConfig:
    phoneme_vocab: int = 43
    hidden_dim: int = 64
    attention_heads: int = 2
    ffn_dim: int = 256
    conv_kernel: int = 3
    conv_branches: int = 2
    encoder_blocks: int = 2
    decoder_blocks: int = 2
    mel_bins: int = 16
    pitch_vocab: int = 128
    language_count: int = 3
    singer_count: int = 3
    epsilon: float = 1e-5
    embed_init_scale: float = 0.01

    def __post_init__(self):
        if self.hidden_dim % self.attention_heads != 0:
            raise ConfigError(f"hidden_dim {self.hidden_dim} not divisible by "
                              f"{self.attention_heads} heads")
        for name in ("phoneme_vocab", "hidden_dim", "attention_heads", "ffn_dim",
                     "conv_kernel", "conv_branches", "encoder_blocks",
                     "decoder_blocks", "mel_bins", "pitch_vocab",
                     "language_count", "singer_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.conv_kernel % 2 == 0:
            raise ConfigError("conv_kernel must be odd (same padding)")


@dataclass
class ClnParams:
    """Projections from a conditioning embedding to per-channel scale/bias."""
    w_alpha: Tensor
    w_beta: Tensor


@dataclass
class GeneratorOutput:
    mel: Tensor                       # (frames, mel_bins)
    encoder_out: Tensor               # (T, hidden_dim), pre singer injection
    predicted_log_durations: Tensor   # (T,)
    frames_used: list[int]            # per-phoneme frames fed to the regulator


def duration_bucket(frames: int) -> int:
    """Index of the coarse duration bucket a frame count falls into."""
    if frames < 1:
        raise ContractError(f"duration must be >= 1, got {frames}")
    idx = 0
    for i, edge in enumerate(DURATION_BUCKETS):
        if frames >= edge:
            idx = i
    return idx


def sinusoidal_encoding(length: int, dim: int) -> np.ndarray:
    """Fixed sin/cos position table, (length, dim)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(i / 2.0) / dim)
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angle[:, 0::2])
    table[:, 1::2] = np.cos(angle[:, 1::2])
    return table


def init_generator_params(cfg: GeneratorConfig, rng: CounterRng) -> ParamSet:
    p = ParamSet()
    d, s = cfg.hidden_dim, cfg.embed_init_scale

    def draw(name, shape, scale):
        p.add(name, rng.substream("init", name).normal(shape, scale))

    draw("embed.phoneme", (cfg.phoneme_vocab, d), s)
    draw("embed.pitch", (cfg.pitch_vocab, d), s)
    draw("embed.duration", (len(DURATION_BUCKETS), d), s)
    draw("embed.singer", (cfg.singer_count, d), s)
    # Language rows start near the all-ones vector so the conditional
    # normalization begins as an ordinary layer norm (alpha ~ 1, beta ~ 0)
    # with the identity-initialized scale projection below.
    lang = 1.0 + rng.substream("init", "embed.language").normal((cfg.language_count, d), s)
    p.add("embed.language", lang)
    p.add("cln.w_alpha", np.eye(d) + rng.substream("init", "cln.w_alpha").normal((d, d), s))
    draw("cln.w_beta", (d, d), s)

    w_scale = 1.0 / np.sqrt(d)
    for stack, blocks in (("enc", cfg.encoder_blocks), ("dec", cfg.decoder_blocks)):
        for b in range(blocks):
            pre = f"{stack}.{b}."
            for w in ("wq", "wk", "wv", "wo"):
                draw(pre + "attn." + w, (d, d), w_scale)
            for br in range(cfg.conv_branches):
                k_scale = 1.0 / np.sqrt(d * cfg.conv_kernel)
                draw(pre + f"branch{br}.conv1", (d, d, cfg.conv_kernel), k_scale)
                draw(pre + f"branch{br}.conv2", (d, d, cfg.conv_kernel), k_scale)
            draw(pre + "ffn.w1", (d, cfg.ffn_dim), w_scale)
            p.add(pre + "ffn.b1", np.zeros(cfg.ffn_dim))
            draw(pre + "ffn.w2", (cfg.ffn_dim, d), 1.0 / np.sqrt(cfg.ffn_dim))
            p.add(pre + "ffn.b2", np.zeros(d))

    k_scale = 1.0 / np.sqrt(d * cfg.conv_kernel)
    draw("dur.conv1", (d, d, cfg.conv_kernel), k_scale)
    draw("dur.conv2", (d, d, cfg.conv_kernel), k_scale)
    draw("dur.w", (d, 1), w_scale)
    p.add("dur.b", np.zeros(1))
    draw("mel.w", (d, cfg.mel_bins), w_scale)
    p.add("mel.b", np.zeros(cfg.mel_bins))
    return p


def embed_inputs(seq: SequenceTriple, params: ParamSet, cfg: GeneratorConfig) -> Tensor:
    """Sum of phoneme/pitch/duration-bucket embeddings plus positions."""
    t = len(seq.phoneme_ids)
    if t == 0:
        raise ContractError("cannot embed an empty sequence")
    x = ad.gather_rows(params["embed.phoneme"], seq.phoneme_ids)
    x = ad.add(x, ad.gather_rows(params["embed.pitch"], seq.pitches))
    buckets = [duration_bucket(d) for d in seq.durations]
    x = ad.add(x, ad.gather_rows(params["embed.duration"], buckets))
    return ad.add(x, Tensor(sinusoidal_encoding(t, cfg.hidden_dim)))


def cln(x: Tensor, language_embedding: Tensor, p: ClnParams,
        epsilon: float = 1e-5) -> Tensor:
    """Conditional layer normalization.

    Per-timestep normalization of x (T, d); scale and bias come from
    the language embedding through the two projections.  The embedding
    is a (1, d) row; statistics never depend on it.
    """
    if language_embedding.shape != (1, x.shape[1]):
        raise ContractError(f"language embedding must be (1, {x.shape[1]}), "
                            f"got {language_embedding.shape}")
    alpha = ad.reshape(ad.matmul(language_embedding, p.w_alpha), (x.shape[1],))
    beta = ad.reshape(ad.matmul(language_embedding, p.w_beta), (x.shape[1],))
    normed, _, _ = ad.layer_norm(x, epsilon)
    return ad.add_rowvec(ad.mul_rowvec(normed, alpha), beta)


def multi_head_attention(x: Tensor, params: ParamSet, prefix: str,
                         cfg: GeneratorConfig) -> Tensor:
    d, heads = cfg.hidden_dim, cfg.attention_heads
    dh = d // heads
    q = ad.matmul(x, params[prefix + "attn.wq"])
    k = ad.matmul(x, params[prefix + "attn.wk"])
    v = ad.matmul(x, params[prefix + "attn.wv"])
    outs = []
    for h in range(heads):
        lo, hi = h * dh, (h + 1) * dh
        qh = ad.slice_cols(q, lo, hi)
        kh = ad.slice_cols(k, lo, hi)
        vh = ad.slice_cols(v, lo, hi)
        scores = ad.scale(ad.matmul(qh, ad.transpose(kh)), 1.0 / np.sqrt(dh))
        outs.append(ad.matmul(ad.softmax(scores), vh))
    return ad.matmul(ad.concat_cols(outs), params[prefix + "attn.wo"])


def _conv_branch(x: Tensor, params: ParamSet, prefix: str) -> Tensor:
    h = ad.transpose(x)  # (d, T): channels over time
    h = ad.relu(ad.conv1d(h, params[prefix + "conv1"], padding="same"))
    h = ad.conv1d(h, params[prefix + "conv2"], padding="same")
    return ad.transpose(h)


def _ffn(x: Tensor, params: ParamSet, prefix: str) -> Tensor:
    h = ad.relu(ad.add_rowvec(ad.matmul(x, params[prefix + "ffn.w1"]),
                              params[prefix + "ffn.b1"]))
    return ad.add_rowvec(ad.matmul(h, params[prefix + "ffn.w2"]),
                         params[prefix + "ffn.b2"])


def conv_fft_block(x: Tensor, params: ParamSet, prefix: str, cfg: GeneratorConfig,
                   language_condition: tuple[Tensor, ClnParams] | None = None) -> Tensor:
    """One encoder/decoder block.

    y1 = LN(x + attention(x) + sum of conv branches(x)); the output is
    NORM(y1 + FFN(y1)) where NORM is conditional iff a language
    condition is supplied.
    """
    mix = multi_head_attention(x, params, prefix, cfg)
    for br in range(cfg.conv_branches):
        mix = ad.add(mix, _conv_branch(x, params, f"{prefix}branch{br}."))
    y1, _, _ = ad.layer_norm(ad.add(x, mix), cfg.epsilon)
    pre = ad.add(y1, _ffn(y1, params, prefix))
    if language_condition is not None:
        emb, cln_params = language_condition
        return cln(pre, emb, cln_params, cfg.epsilon)
    out, _, _ = ad.layer_norm(pre, cfg.epsilon)
    return out


def predict_durations(h: Tensor, params: ParamSet) -> Tensor:
    """Log frame counts per phoneme, (T,)."""
    c = ad.transpose(h)
    c = ad.relu(ad.conv1d(c, params["dur.conv1"], padding="same"))
    c = ad.relu(ad.conv1d(c, params["dur.conv2"], padding="same"))
    out = ad.add_rowvec(ad.matmul(ad.transpose(c), params["dur.w"]), params["dur.b"])
    return ad.reshape(out, (h.shape[0],))


def durations_from_log(log_durations: np.ndarray) -> list[int]:
    """Inference rounding: exp, then round half up, floor at one frame."""
    return [max(1, int(np.floor(np.exp(v) + 0.5))) for v in np.asarray(log_durations)]


def length_regulate(x: Tensor, durations: list[int]) -> Tensor:
    return ad.repeat_rows(x, durations)


def generator_forward(seq: SequenceTriple, language_id: int | None, singer_id: int,
                      params: ParamSet, cfg: GeneratorConfig, *,
                      training: bool = False,
                      teacher_durations: list[int] | None = None) -> GeneratorOutput:
    """Full forward pass.

    language_id None runs unconditioned (plain layer norm everywhere),
    which is the reference arm for the conditioning degeneracy checks.
    """
    if language_id is not None and not 0 <= language_id < cfg.language_count:
        raise ContractError(f"language_id {language_id} out of range")
    if not 0 <= singer_id < cfg.singer_count:
        raise ContractError(f"singer_id {singer_id} out of range")
    if training and teacher_durations is None:
        raise ContractError("training mode requires teacher-forced durations")

    x = embed_inputs(seq, params, cfg)
    condition = None
    if language_id is not None:
        condition = (ad.gather_rows(params["embed.language"], [language_id]),
                     ClnParams(params["cln.w_alpha"], params["cln.w_beta"]))
    h = x
    for b in range(cfg.encoder_blocks):
        # Conditioning enters through the first block only.
        h = conv_fft_block(h, params, f"enc.{b}.", cfg,
                           language_condition=condition if b == 0 else None)
    encoder_out = h

    singer_row = ad.reshape(ad.gather_rows(params["embed.singer"], [singer_id]),
                            (cfg.hidden_dim,))
    h = ad.add_rowvec(encoder_out, singer_row)

    log_dur = predict_durations(h, params)
    if training:
        frames = list(teacher_durations)
        if len(frames) != len(seq.phoneme_ids):
            raise ContractError("teacher durations length mismatch")
    else:
        frames = durations_from_log(log_dur.data)

    h = length_regulate(h, frames)
    for b in range(cfg.decoder_blocks):
        h = conv_fft_block(h, params, f"dec.{b}.", cfg)
    mel = ad.add_rowvec(ad.matmul(h, params["mel.w"]), params["mel.b"])
    return GeneratorOutput(mel=mel, encoder_out=encoder_out,
                           predicted_log_durations=log_dur, frames_used=frames)
