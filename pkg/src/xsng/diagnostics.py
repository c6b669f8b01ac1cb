"""Gradient-check battery over every differentiable op and module.

Each case pairs the tape's analytic gradient with central differences
through a scalar functional of the op.  Inputs are drawn from fixed
substreams and nudged away from kinks (relu, |x|, clamp boundaries) so
the finite-difference oracle is valid at the probe points.

The reversal layer appears only in its lam = -1 form, where analytic
and numeric gradients must agree; under positive lam they disagree by
construction, and the twin-graph tests cover that contract instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .discriminator import (
    DiscConfig,
    SubBandSplit,
    acoustic_loss,
    disc_forward,
    feature_match_loss,
    init_discriminator_params,
    lsgan_d_loss,
    lsgan_g_loss,
    split_subbands,
)
from .eliminator import classify_singer, init_eliminator_params, singer_loss
from .frontend import SequenceTriple
from .generator import (
    ClnParams,
    GeneratorConfig,
    cln,
    conv_fft_block,
    generator_forward,
    init_generator_params,
)
from .rng import CounterRng

TOLERANCE = 1e-4
STEP = 1e-5


@dataclass
class GradCheckCase:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _away_from_zero(a: np.ndarray, margin: float = 0.2) -> np.ndarray:
    """Push values out of (-margin, margin) so kinks stay far from probes."""
    return np.where(a >= 0, a + margin, a - margin)


def _weighted_sum(t: Tensor, rng: CounterRng) -> Tensor:
    """Scalar functional with a fixed random weighting, so every output
    coordinate influences the loss and dead directions cannot hide."""
    w = Tensor(rng.substream("functional").normal(t.shape))
    return ad.sum_all(ad.mul(t, w))


def run_gradcheck_suite(tolerance: float = TOLERANCE, h: float = STEP,
                        seed: int = 11) -> list:
    """Run every case; returns GradCheckCase results in a fixed order."""
    rng = CounterRng(seed)
    cases: list[GradCheckCase] = []

    def check(name, f, x0):
        cases.append(GradCheckCase(name, grad_check(f, Tensor(x0), h), tolerance))

    def draw(*shape):
        return rng.substream("x", len(cases)).normal(shape)

    a34 = draw(3, 4)
    b34 = rng.substream("other", 0).normal((3, 4))
    w45 = rng.substream("other", 1).normal((4, 5))
    row4 = rng.substream("other", 2).normal(4)

    def wsum(f):
        return lambda x: _weighted_sum(f(x), rng)

    check("add", wsum(lambda x: ad.add(x, Tensor(b34))), a34)
    check("sub", wsum(lambda x: ad.sub(Tensor(b34), x)), a34)
    check("mul", wsum(lambda x: ad.mul(x, Tensor(b34))), a34)
    check("scale", wsum(lambda x: ad.scale(x, -1.7)), a34)
    check("add_scalar", wsum(lambda x: ad.add_scalar(x, 0.31)), a34)
    check("neg", wsum(ad.neg), a34)
    check("matmul_lhs", wsum(lambda x: ad.matmul(x, Tensor(w45))), a34)
    check("matmul_rhs", wsum(lambda x: ad.matmul(Tensor(a34), x)),
          rng.substream("x", "mm").normal((4, 5)))
    check("transpose", wsum(ad.transpose), a34)
    check("relu", wsum(ad.relu), _away_from_zero(draw(3, 4)))
    check("leaky_relu", wsum(lambda x: ad.leaky_relu(x, 0.2)),
          _away_from_zero(draw(3, 4)))
    check("log", wsum(ad.log), np.abs(draw(3, 4)) + 0.5)
    check("clamp_min", wsum(lambda x: ad.clamp_min(x, 0.0)),
          _away_from_zero(draw(3, 4)))
    check("square", wsum(ad.square), a34)
    check("absolute", wsum(ad.absolute), _away_from_zero(draw(3, 4)))
    check("sum_all", lambda x: ad.sum_all(x), a34)
    check("mean_all", lambda x: ad.mean_all(x), a34)
    check("mean_rows", wsum(ad.mean_rows), a34)
    check("mul_rowvec", wsum(lambda x: ad.mul_rowvec(x, Tensor(row4))), a34)
    check("mul_rowvec_vec", wsum(lambda v: ad.mul_rowvec(Tensor(a34), v)), row4)
    check("add_rowvec", wsum(lambda x: ad.add_rowvec(x, Tensor(row4))), a34)
    check("add_rowvec_vec", wsum(lambda v: ad.add_rowvec(Tensor(a34), v)), row4)
    check("softmax", wsum(ad.softmax), draw(5))
    check("layer_norm", wsum(lambda x: ad.layer_norm(x, 1e-5)[0]), draw(3, 4))
    check("conv1d_same",
          wsum(lambda x: ad.conv1d(x, Tensor(rng.substream("k1").normal((2, 3, 3))),
                                   padding="same")), draw(3, 7))
    check("conv1d_same_kernel",
          wsum(lambda k: ad.conv1d(Tensor(draw(3, 7)), k, padding="same")),
          rng.substream("k2").normal((2, 3, 3)))
    check("conv1d_valid",
          wsum(lambda x: ad.conv1d(x, Tensor(rng.substream("k3").normal((2, 3, 3))),
                                   padding="valid")), draw(3, 7))
    check("conv2d",
          wsum(lambda x: ad.conv2d(x, Tensor(rng.substream("k4").normal((2, 1, 3, 3))))),
          draw(1, 5, 4))
    check("conv2d_kernel",
          wsum(lambda k: ad.conv2d(Tensor(draw(1, 5, 4)), k)),
          rng.substream("k5").normal((2, 1, 3, 3)))
    check("gather_rows",
          wsum(lambda x: ad.gather_rows(x, [2, 0, 2, 1])), draw(3, 4))
    check("repeat_rows", wsum(lambda x: ad.repeat_rows(x, [2, 1, 3])), draw(3, 4))
    check("slice_rows", wsum(lambda x: ad.slice_rows(x, 1, 3)), draw(4, 3))
    check("slice_cols", wsum(lambda x: ad.slice_cols(x, 1, 3)), draw(3, 4))
    check("concat_cols",
          wsum(lambda x: ad.concat_cols([x, Tensor(b34)])), a34)
    check("reshape", wsum(lambda x: ad.reshape(x, (4, 3))), a34)
    check("pick", lambda x: ad.pick(x, 2), draw(5))
    check("gradient_reversal_identity",
          wsum(lambda x: ad.gradient_reversal(x, -1.0)), a34)

    _composite_cases(check, rng)
    return cases


def _composite_cases(check, rng: CounterRng) -> None:
    gen_cfg = GeneratorConfig(phoneme_vocab=6, hidden_dim=4, attention_heads=2,
                              ffn_dim=6, mel_bins=4, conv_branches=1,
                              encoder_blocks=1, decoder_blocks=1,
                              language_count=2, singer_count=2,
                              embed_init_scale=0.1)
    gen_params = init_generator_params(gen_cfg, rng.substream("gen"))
    seq = SequenceTriple(phoneme_ids=[1, 3, 2], pitches=[60, 64, 62],
                         durations=[2, 3, 2], language_id=0,
                         source_events=[0, 1, 2])
    target = rng.substream("target").normal((7, gen_cfg.mel_bins))

    lang_row = ad.gather_rows(gen_params["embed.language"], [0])
    cln_params = ClnParams(gen_params["cln.w_alpha"], gen_params["cln.w_beta"])
    hidden = rng.substream("hidden").normal((5, gen_cfg.hidden_dim))

    def cln_out(x):
        return _weighted_sum(cln(x, lang_row, cln_params), rng)

    check("cln_input", cln_out, hidden)

    def cln_by_alpha(wa):
        p = ClnParams(wa, gen_params["cln.w_beta"])
        return _weighted_sum(cln(Tensor(hidden), lang_row, p), rng)

    check("cln_scale_weights", cln_by_alpha, gen_params["cln.w_alpha"].data)

    def block_out(x):
        y = conv_fft_block(x, gen_params, "enc.0.", gen_cfg,
                           language_condition=(lang_row, cln_params))
        return _weighted_sum(y, rng)

    check("conv_fft_block_input", block_out, hidden)

    def generator_loss(wa):
        params = gen_params.replaced("cln.w_alpha", wa)
        out = generator_forward(seq, 0, 1, params, gen_cfg, training=True,
                                teacher_durations=seq.durations)
        return acoustic_loss(out.mel, target, out.predicted_log_durations,
                             seq.durations)

    check("generator_acoustic_via_cln", generator_loss,
          gen_params["cln.w_alpha"].data)

    elim_params = init_eliminator_params(4, 2, 3, rng.substream("elim"))
    enc = rng.substream("enc").normal((5, 4))

    def eliminator_loss(w):
        params = elim_params.replaced("conv2", w)
        return singer_loss(classify_singer(Tensor(enc), params, 1.0), 1)

    check("eliminator_classifier_weights", eliminator_loss,
          elim_params["conv2"].data)

    def eliminator_encoder_path(x):
        # lam = -1 makes the reversal an identity, so the numeric oracle
        # applies; the sign contract is covered by the twin-graph tests.
        return singer_loss(classify_singer(x, elim_params, -1.0), 0)

    check("eliminator_encoder_input", eliminator_encoder_path, enc)

    disc_cfg = DiscConfig(band_count=2, channels=2, segment_frames=4)
    disc_params = init_discriminator_params(disc_cfg, rng.substream("disc"))
    split = SubBandSplit.even(2, 8)
    mel = rng.substream("mel").normal((6, 8))
    real = rng.substream("real").normal((6, 8))

    def disc_g_loss(x):
        scores, fake_feats = [], []
        for b, band in enumerate(split_subbands(x, split)):
            s, f = disc_forward(band, disc_params, f"detail{b}", disc_cfg)
            scores.append(s)
            fake_feats.append(f)
        real_feats = [disc_forward(band, disc_params, f"detail{b}", disc_cfg)[1]
                      for b, band in enumerate(split_subbands(Tensor(real), split))]
        return ad.add(lsgan_g_loss(scores),
                      feature_match_loss(real_feats, fake_feats))

    check("discriminator_generator_losses", disc_g_loss, mel)

    def disc_d_loss(w):
        params = disc_params.replaced("detail0.conv2", w)
        reals, fakes = [], []
        for b, band in enumerate(split_subbands(Tensor(real), split)):
            reals.append(disc_forward(band, params, f"detail{b}", disc_cfg)[0])
        for b, band in enumerate(split_subbands(Tensor(mel), split)):
            fakes.append(disc_forward(band, params, f"detail{b}", disc_cfg)[0])
        return lsgan_d_loss(reals, fakes)

    check("discriminator_adversarial_weights", disc_d_loss,
          disc_params["detail0.conv2"].data)


def format_report(cases: list, elapsed: float | None = None) -> str:
    lines = []
    width = max(len(c.name) for c in cases)
    for c in cases:
        status = "ok  " if c.passed else "FAIL"
        lines.append(f"{status} {c.name:<{width}} max rel err {c.error:.3e}"
                     f" (tol {c.tolerance:g})")
    failed = sum(not c.passed for c in cases)
    tail = f"{len(cases)} checks, {failed} failed"
    if elapsed is not None:
        tail += f", {elapsed:.1f}s"
    lines.append(tail)
    return "\n".join(lines)


def main_suite() -> tuple:
    """Run the suite with timing; returns (cases, elapsed_seconds)."""
    t0 = time.perf_counter()
    cases = run_gradcheck_suite()
    return cases, time.perf_counter() - t0
