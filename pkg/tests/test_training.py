"""Optimizer, corpus, checkpoint and loop tests.

The Adam test replays an independently coded reference trace; the
schedule tests pin the exact arithmetic the warmup/decay contract
promises; loop tests focus on determinism and resume equivalence.
"""

import json
import struct

import numpy as np
import pytest

import xsng.autodiff as ad
from xsng.autodiff import Tape, Tensor
from xsng.discriminator import DiscConfig, LossWeights
from xsng.errors import (
    ConfigError,
    ContractError,
    FormatError,
    NumericError,
    TrainingDiverged,
)
from xsng.frontend import Language, UnifiedLexicon, shipped_lexicon
from xsng.generator import GeneratorConfig
from xsng.params import ParamSet
from xsng.rng import CounterRng
from xsng.training import (
    AdamState,
    CheckpointState,
    CorpusConfig,
    LrSchedule,
    ProbeConfig,
    TrainConfig,
    adam_step,
    load_checkpoint,
    lr_at,
    make_synthetic_corpus,
    probe_singer_accuracy,
    save_checkpoint,
    train,
)
from xsng.training.checkpoint import checkpoint_bytes
from xsng.training.corpus import shared_syllable_pools
from xsng.training.probe import encoder_features

LEX = shipped_lexicon()


def tiny_train_config(**overrides):
    base = dict(
        generator=GeneratorConfig(phoneme_vocab=LEX.vocab_size, hidden_dim=8,
                                  attention_heads=2, ffn_dim=12, mel_bins=8,
                                  encoder_blocks=1, decoder_blocks=1,
                                  conv_branches=1, embed_init_scale=0.1),
        discriminator=DiscConfig(band_count=2, channels=4),
        corpus=CorpusConfig(items=9),
        schedule=LrSchedule(warmup_steps=10),
        steps=4, batch_size=4, seed=7,
    )
    base.update(overrides)
    return TrainConfig(**base)


# ------------------------------------------------------------ schedule

def test_lr_warmup_endpoints_exact():
    sched = LrSchedule()
    assert lr_at(0, 0, sched) == 1e-4
    assert lr_at(5000, 0, sched) == 1e-2


def test_lr_warmup_is_linear():
    sched = LrSchedule()
    assert lr_at(2500, 0, sched) == 1e-4 + (1e-2 - 1e-4) * (2500 / 5000)
    assert lr_at(1, 0, sched) == 1e-4 + (1e-2 - 1e-4) * (1 / 5000)


def test_lr_epoch_decay_is_exact_ratio():
    sched = LrSchedule()
    for epoch in range(10):
        assert lr_at(9000, epoch + 1, sched) == lr_at(9000, epoch, sched) * 0.99


def test_lr_decay_ignored_during_warmup():
    sched = LrSchedule()
    assert lr_at(4999, 0, sched) < sched.peak


def test_lr_rejects_negative_inputs():
    with pytest.raises(ContractError):
        lr_at(-1, 0, LrSchedule())
    with pytest.raises(ContractError):
        lr_at(0, -1, LrSchedule())


def test_schedule_validation():
    with pytest.raises(ConfigError):
        LrSchedule(peak=0.0)
    with pytest.raises(ConfigError):
        LrSchedule(epoch_decay=1.5)


# ---------------------------------------------------------------- adam

def test_adam_matches_reference_trace():
    a = np.array([[1.0, -2.0], [0.5, 3.0]])
    b = np.array([[0.3, 0.7], [-1.1, 0.2]])
    w0 = np.array([[0.1, 0.2], [-0.3, 0.4]])
    params = ParamSet()
    wt = params.add("w", w0.copy())
    state = AdamState()
    lr = 0.01

    ref_w = w0.copy()
    m = np.zeros_like(w0)
    v = np.zeros_like(w0)
    for t in range(1, 6):
        with Tape() as tape:
            loss = ad.mean_all(ad.square(ad.sub(ad.mul(wt, Tensor(a)), Tensor(b))))
            tape.backward(loss)
        adam_step(params, params.gradients(tape), state, lr)

        g = 2.0 * (ref_w * a - b) * a / a.size
        m = 0.9 * m + 0.1 * g
        v = 0.98 * v + 0.02 * (g * g)
        ref_w = ref_w - lr * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.98 ** t)) + 1e-9)
        assert np.allclose(wt.data, ref_w, rtol=0, atol=1e-15)


def test_adam_first_step_is_signed_lr():
    params = ParamSet()
    w = params.add("w", np.array([1.0, -1.0]))
    adam_step(params, {"w": np.array([0.5, -0.25])}, AdamState(), 0.01)
    # With bias correction the first update is lr * sign(g) up to epsilon.
    assert np.allclose(w.data, [1.0 - 0.01, -1.0 + 0.01], atol=1e-9)


def test_adam_rejects_nonfinite_gradient():
    params = ParamSet()
    params.add("bad", np.array([1.0]))
    with pytest.raises(NumericError) as exc:
        adam_step(params, {"bad": np.array([np.nan])}, AdamState(), 0.01)
    assert "bad" in str(exc.value)


def test_adam_zero_gradient_leaves_value():
    params = ParamSet()
    w = params.add("w", np.array([2.0]))
    adam_step(params, {"w": np.array([0.0])}, AdamState(), 0.01)
    assert w.data[0] == 2.0


# -------------------------------------------------------------- corpus

def test_corpus_is_deterministic():
    a = make_synthetic_corpus(CorpusConfig(items=9), 3, LEX, 8)
    b = make_synthetic_corpus(CorpusConfig(items=9), 3, LEX, 8)
    for x, y in zip(a.items, b.items):
        assert x.sequence == y.sequence
        assert np.array_equal(x.target_mel, y.target_mel)


def test_corpus_singer_language_bijection():
    corpus = make_synthetic_corpus(CorpusConfig(items=12), 0, LEX, 8)
    for i, item in enumerate(corpus.items):
        assert item.singer_id == i % 3
        assert item.language_id == item.singer_id


def test_corpus_rejects_singer_language_mismatch():
    with pytest.raises(ConfigError):
        CorpusConfig(singer_count=3, language_count=2)


def test_corpus_shapes_and_ranges():
    corpus = make_synthetic_corpus(CorpusConfig(items=9), 5, LEX, 8)
    for item in corpus.items:
        seq = item.sequence
        assert item.target_mel.shape == (seq.total_frames, 8)
        assert all(0 <= p < LEX.vocab_size for p in seq.phoneme_ids)
        assert all(d >= 1 for d in seq.durations)
        assert any(p != 0 for p in seq.phoneme_ids)


def test_corpus_render_rule_without_noise():
    # With the noise floor off, frames inside one phoneme segment are
    # bit-identical copies of phoneme + pitch + singer signatures.
    cfg = CorpusConfig(items=6, noise_scale=0.0)
    corpus = make_synthetic_corpus(cfg, 11, LEX, 8)
    checked = 0
    for item in corpus.items:
        row = 0
        for dur in item.sequence.durations:
            seg = item.target_mel[row:row + dur]
            assert np.array_equal(seg, np.tile(seg[0], (dur, 1)))
            row += dur
            checked += 1
    assert checked > 0


def test_corpus_seed_changes_content():
    a = make_synthetic_corpus(CorpusConfig(items=6), 1, LEX, 8)
    b = make_synthetic_corpus(CorpusConfig(items=6), 2, LEX, 8)
    assert any(not np.array_equal(x.target_mel, y.target_mel)
               for x, y in zip(a.items, b.items)
               if x.target_mel.shape == y.target_mel.shape) or \
        any(x.target_mel.shape != y.target_mel.shape
            for x, y in zip(a.items, b.items))


# ---------------------------------------------------------- checkpoint

def _sample_state():
    return CheckpointState(
        tensors={
            "gen.w": np.arange(6, dtype=np.float64).reshape(2, 3),
            "opt.g.m.gen.w": np.zeros((2, 3)),
            "scalar": np.array(3.5),
        },
        meta={"step": 7, "config": {"seed": 1}, "note": "héllo", "big": 2 ** 63},
    )


def test_checkpoint_round_trip(tmp_path):
    path = tmp_path / "state.xsng"
    state = _sample_state()
    save_checkpoint(state, path)
    loaded = load_checkpoint(path)
    assert loaded.meta == state.meta
    assert set(loaded.tensors) == set(state.tensors)
    for name, arr in state.tensors.items():
        assert np.array_equal(loaded.tensors[name], arr)
        assert loaded.tensors[name].dtype == np.float64


def test_checkpoint_save_load_save_is_byte_identical(tmp_path):
    path = tmp_path / "state.xsng"
    save_checkpoint(_sample_state(), path)
    original = path.read_bytes()
    assert checkpoint_bytes(load_checkpoint(path)) == original


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "state.xsng"
    save_checkpoint(_sample_state(), path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"JUNK"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError) as exc:
        load_checkpoint(path)
    assert "magic" in str(exc.value)


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = tmp_path / "state.xsng"
    save_checkpoint(_sample_state(), path)
    blob = bytearray(path.read_bytes())
    blob[4:6] = struct.pack("<H", 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError) as exc:
        load_checkpoint(path)
    assert "version" in str(exc.value)


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "state.xsng"
    save_checkpoint(_sample_state(), path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError) as exc:
        load_checkpoint(path)
    assert "truncated" in str(exc.value)


def test_checkpoint_rejects_trailing_garbage(tmp_path):
    path = tmp_path / "state.xsng"
    save_checkpoint(_sample_state(), path)
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(FormatError) as exc:
        load_checkpoint(path)
    assert "trailing" in str(exc.value)


def test_checkpoint_rejects_nonsequential_offset(tmp_path):
    path = tmp_path / "state.xsng"
    save_checkpoint(CheckpointState(tensors={"w": np.array([1.0, 2.0])},
                                    meta={}), path)
    blob = bytearray(path.read_bytes())
    # magic(4) version+count(6) name_len(2) name(1) dtype+rank(2) dim(4)
    offset_pos = 4 + 6 + 2 + 1 + 2 + 4
    blob[offset_pos:offset_pos + 8] = struct.pack("<Q", 8)
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError) as exc:
        load_checkpoint(path)
    assert "sequential" in str(exc.value)


# -------------------------------------------------------- train config

def test_train_config_json_round_trip():
    cfg = tiny_train_config()
    clone = TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert clone == cfg


def test_train_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"stepz": 10})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"schedule": {"peaky": 1.0}})


def test_train_validates_vocab_against_lexicon():
    cfg = tiny_train_config()
    cfg.generator.phoneme_vocab = 10
    with pytest.raises(ConfigError):
        train(cfg)


def test_train_rejects_narrow_detail_bands():
    cfg = tiny_train_config()
    cfg.generator.mel_bins = 4  # 2 bins per band < 3-tap kernel
    with pytest.raises(ConfigError):
        train(cfg)


# ---------------------------------------------------------- train loop

def test_train_metrics_schema_and_determinism():
    cfg = tiny_train_config(steps=3)
    a = train(cfg)
    b = train(cfg)
    assert a.metrics == b.metrics
    assert [r["step"] for r in a.metrics] == [1, 2, 3]
    for rec in a.metrics:
        assert set(rec) >= {"step", "epoch", "lr", "L_a", "L_adv", "L_f",
                            "L_s", "d_loss"}
        assert all(np.isfinite(v) for k, v in rec.items()
                   if isinstance(v, float))


def test_train_resume_is_bit_exact(tmp_path):
    full = train(tiny_train_config(steps=8), out_dir=tmp_path / "full")
    train(tiny_train_config(steps=4), out_dir=tmp_path / "part")
    resumed = train(tiny_train_config(steps=8), out_dir=tmp_path / "part",
                    resume_from=tmp_path / "part" / "checkpoint.xsng")
    assert [r["step"] for r in resumed.metrics] == [5, 6, 7, 8]
    assert full.metrics[4:] == resumed.metrics
    assert ((tmp_path / "full" / "checkpoint.xsng").read_bytes()
            == (tmp_path / "part" / "checkpoint.xsng").read_bytes())
    assert ((tmp_path / "full" / "metrics.jsonl").read_text()
            == (tmp_path / "part" / "metrics.jsonl").read_text())


def test_train_resume_rejects_config_change(tmp_path):
    train(tiny_train_config(steps=2), out_dir=tmp_path)
    changed = tiny_train_config(steps=4, batch_size=3)
    with pytest.raises(ConfigError):
        train(changed, resume_from=tmp_path / "checkpoint.xsng")


def test_train_resume_allows_longer_step_budget(tmp_path):
    train(tiny_train_config(steps=2), out_dir=tmp_path)
    result = train(tiny_train_config(steps=3),
                   resume_from=tmp_path / "checkpoint.xsng")
    assert [r["step"] for r in result.metrics] == [3]


def test_train_without_gan_skips_discriminator():
    cfg = tiny_train_config(
        steps=3, weights=LossWeights(adversarial=0.0, feature_match=0.0))
    result = train(cfg)
    for rec in result.metrics:
        assert rec["d_loss"] == 0.0
        assert rec["L_adv"] == 0.0
        assert rec["L_f"] == 0.0
    # Discriminator parameters never left their init.
    from xsng.discriminator import init_discriminator_params
    fresh = init_discriminator_params(cfg.discriminator, CounterRng(cfg.seed))
    for name, tensor in result.discriminator_params.items():
        assert np.array_equal(tensor.data, fresh[name].data)


def test_train_updates_eliminator_when_enabled():
    cfg = tiny_train_config(steps=2)
    result = train(cfg)
    from xsng.eliminator import init_eliminator_params
    fresh = init_eliminator_params(cfg.generator.hidden_dim,
                                   cfg.generator.singer_count,
                                   cfg.generator.conv_kernel,
                                   CounterRng(cfg.seed))
    assert any(not np.array_equal(tensor.data, fresh[name].data)
               for name, tensor in result.eliminator_params.items())


def test_train_acoustic_loss_decreases_without_gan():
    cfg = tiny_train_config(
        steps=40, eliminator_enabled=False,
        weights=LossWeights(adversarial=0.0, feature_match=0.0, singer=0.0),
        schedule=LrSchedule(warmup_start=1e-3, peak=1e-2, warmup_steps=10))
    result = train(cfg)
    first = np.mean([r["L_a"] for r in result.metrics[:5]])
    last = np.mean([r["L_a"] for r in result.metrics[-5:]])
    assert last < first


def test_train_divergence_aborts_with_diagnostics(tmp_path):
    cfg = tiny_train_config(
        steps=50, schedule=LrSchedule(warmup_start=1e4, peak=1e5, warmup_steps=2))
    with pytest.raises(TrainingDiverged) as exc:
        train(cfg, out_dir=tmp_path)
    assert exc.value.diagnostics["step"] >= 0
    report = json.loads((tmp_path / "divergence.json").read_text())
    assert "losses" in report


def test_train_writes_rolling_checkpoints(tmp_path):
    cfg = tiny_train_config(steps=4, checkpoint_every=2)
    train(cfg, out_dir=tmp_path)
    state = load_checkpoint(tmp_path / "checkpoint.xsng")
    assert state.meta["step"] == 4


# --------------------------------------------------------------- probe

def test_probe_holdout_is_balanced_and_disjoint():
    cfg = tiny_train_config(steps=2, corpus=CorpusConfig(items=12))
    result = train(cfg)
    probe = probe_singer_accuracy(result.generator_params, cfg.generator,
                                  result.corpus, ProbeConfig(steps=4))
    assert probe.held_out == 3
    assert probe.trained_on == 9
    assert 0.0 <= probe.accuracy <= 1.0
    assert 0.0 <= probe.train_accuracy <= 1.0


def test_probe_is_deterministic():
    cfg = tiny_train_config(steps=2)
    result = train(cfg)
    kwargs = (result.generator_params, cfg.generator, result.corpus,
              ProbeConfig(steps=6))
    assert probe_singer_accuracy(*kwargs) == probe_singer_accuracy(*kwargs)


def test_encoder_features_ignore_singer_identity():
    # Features are tapped before singer injection, so they cannot leak
    # the singer embedding directly; only training can put singer
    # information there.
    cfg = tiny_train_config(steps=2)
    result = train(cfg)
    feats = encoder_features(result.generator_params, cfg.generator,
                             result.corpus)
    item = result.corpus.items[0]
    from xsng.generator import generator_forward
    other = generator_forward(item.sequence, item.language_id,
                              (item.singer_id + 1) % 3,
                              result.generator_params, cfg.generator,
                              training=True,
                              teacher_durations=item.sequence.durations)
    assert np.array_equal(feats[0], other.encoder_out.data)


# ------------------------------------------------- shared syllable pool

def test_shared_pool_is_index_aligned():
    pools = shared_syllable_pools(LEX, list(Language))
    lengths = {len(v) for v in pools.values()}
    assert lengths == {6}
    for k in range(6):
        ids = {tuple(LEX.encode(pools[lang][k], lang)) for lang in Language}
        assert len(ids) == 1


def test_shared_pool_requires_overlap():
    disjoint = UnifiedLexicon(
        entries={Language.ZH: {"ba": ("b", "a")},
                 Language.JA: {"ki": ("k", "i")}},
        symbol_table={"a": 1, "b": 2, "i": 3, "k": 4},
        symbol_class={"a": "vowel", "b": "consonant",
                      "i": "vowel", "k": "consonant"})
    with pytest.raises(ConfigError):
        shared_syllable_pools(disjoint, [Language.ZH, Language.JA])


def test_corpus_shared_pool_restricts_content():
    pools = shared_syllable_pools(LEX, list(Language))
    allowed = {0}
    for syllable in pools[Language.ZH]:
        allowed.update(LEX.encode(syllable, Language.ZH))
    corpus = make_synthetic_corpus(CorpusConfig(items=9, syllable_pool="shared"),
                                   3, LEX, 8)
    for item in corpus.items:
        assert set(item.sequence.phoneme_ids) <= allowed


def test_corpus_rejects_unknown_pool():
    with pytest.raises(ConfigError):
        CorpusConfig(syllable_pool="everything")


# ------------------------------------------------- adversary schedule

def test_eliminator_knob_validation():
    with pytest.raises(ConfigError):
        tiny_train_config(eliminator_lr_scale=0.0)
    with pytest.raises(ConfigError):
        tiny_train_config(eliminator_restart_every=-1)


def test_eliminator_restart_changes_trajectory_after_boundary():
    quiet = dict(weights=LossWeights(adversarial=0.0, feature_match=0.0,
                                     singer=0.5))
    plain = train(tiny_train_config(steps=4, **quiet))
    restarted = train(tiny_train_config(steps=4, eliminator_restart_every=2,
                                        **quiet))
    assert plain.metrics[:2] == restarted.metrics[:2]
    assert plain.metrics[2]["L_s"] != restarted.metrics[2]["L_s"]


def test_eliminator_restart_resume_bit_exact(tmp_path):
    quiet = dict(weights=LossWeights(adversarial=0.0, feature_match=0.0,
                                     singer=0.5), eliminator_restart_every=2)
    full = train(tiny_train_config(steps=4, **quiet), out_dir=tmp_path / "full")
    train(tiny_train_config(steps=2, **quiet), out_dir=tmp_path / "part")
    resumed = train(tiny_train_config(steps=4, **quiet),
                    out_dir=tmp_path / "part",
                    resume_from=tmp_path / "part" / "checkpoint.xsng")
    assert full.metrics[2:] == resumed.metrics
    assert ((tmp_path / "full" / "checkpoint.xsng").read_bytes()
            == (tmp_path / "part" / "checkpoint.xsng").read_bytes())
