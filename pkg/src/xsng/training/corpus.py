"""Synthetic training corpus with a known singer/language structure.

Targets are rendered from random but fixed per-symbol signatures: each
mel frame is the sum of a phoneme vector, a pitch vector and a singer
vector, plus a small noise floor.  Singer identity is therefore a real,
learnable component of the target, which is what the bias probe needs.
Singer i always sings language i, so singer and language labels carry
the same information and the corpus exercises the entanglement the
eliminator is meant to break.

Two syllable pools are supported.  "all" samples from each language's
full lexicon, so phoneme content itself hints at the language.  "shared"
restricts every language to syllables whose phoneme sequences exist in
all of them, leaving the conditioning pathway as the only carrier of
language (and hence singer) information.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..frontend import (
    Language,
    NoteEvent,
    Score,
    SequenceTriple,
    UnifiedLexicon,
    score_to_sequences,
)
from ..rng import CounterRng


@dataclass
class CorpusConfig:
    items: int = 60
    singer_count: int = 3
    language_count: int = 3
    min_notes: int = 4
    max_notes: int = 10
    min_note_frames: int = 4
    max_note_frames: int = 8
    rest_probability: float = 0.1
    pitch_low: int = 48
    pitch_high: int = 72
    noise_scale: float = 0.01
    syllable_pool: str = "all"

    def __post_init__(self):
        if self.syllable_pool not in ("all", "shared"):
            raise ConfigError(
                f"syllable_pool must be 'all' or 'shared', got {self.syllable_pool!r}")
        if self.singer_count != self.language_count:
            raise ConfigError(
                "singer/language identification needs singer_count == language_count, "
                f"got {self.singer_count} and {self.language_count}"
            )
        if self.language_count < 1 or self.language_count > len(Language):
            raise ConfigError(f"language_count must be 1..{len(Language)}")
        if self.items < self.singer_count:
            raise ConfigError("need at least one item per singer")
        if self.min_notes < 1 or self.max_notes < self.min_notes:
            raise ConfigError("note count range is empty")
        if self.min_note_frames < 3 or self.max_note_frames < self.min_note_frames:
            raise ConfigError("note frame range must start at >= 3 frames")
        if not 0.0 <= self.rest_probability < 1.0:
            raise ConfigError("rest_probability must be in [0, 1)")
        if not 0 < self.pitch_low <= self.pitch_high <= 127:
            raise ConfigError("pitch range must sit inside 1..127")


@dataclass
class CorpusItem:
    sequence: SequenceTriple
    target_mel: np.ndarray
    singer_id: int
    language_id: int


@dataclass
class SyntheticCorpus:
    items: list = field(default_factory=list)
    singer_count: int = 0
    language_count: int = 0

    def __len__(self) -> int:
        return len(self.items)


def shared_syllable_pools(lexicon: UnifiedLexicon,
                          languages: list) -> dict:
    """Index-aligned syllable lists restricted to pan-language phoneme sequences.

    Position k holds, for every language, a syllable with the same phoneme
    sequence, so sampling by index draws content that carries no language
    information at all.  The debiasing ablation needs such a corpus: with
    language-unique phonemes in play, content itself identifies the singer
    and no amount of conditioning scrubbing can hide it.
    """
    by_language = []
    for lang in languages:
        table = {}
        for syllable, phones in lexicon.entries[lang].items():
            prior = table.get(phones)
            if prior is None or syllable < prior:
                table[phones] = syllable
        by_language.append(table)
    shared = set(by_language[0])
    for table in by_language[1:]:
        shared &= set(table)
    if not shared:
        names = ", ".join(lang.value for lang in languages)
        raise ConfigError(f"no phoneme sequence is shared by all of: {names}")
    ordered = sorted(shared)
    return {lang: [table[seq] for seq in ordered]
            for lang, table in zip(languages, by_language)}


def _random_events(cfg: CorpusConfig, language: Language, syllables: list,
                   rng: CounterRng) -> list:
    n_notes = int(rng.integers(cfg.min_notes, cfg.max_notes + 1))
    events = []
    for k in range(n_notes):
        # First note is always voiced so every item has content to sing.
        is_rest = k > 0 and float(rng.uniform(())) < cfg.rest_probability
        frames = int(rng.integers(cfg.min_note_frames, cfg.max_note_frames + 1))
        if is_rest:
            events.append(NoteEvent("", language, 0, frames))
            continue
        syllable = syllables[int(rng.integers(0, len(syllables)))]
        pitch = int(rng.integers(cfg.pitch_low, cfg.pitch_high + 1))
        events.append(NoteEvent(syllable, language, pitch, frames))
    return events


def _render_target(seq: SequenceTriple, singer_id: int, mel: dict,
                   noise_scale: float, rng: CounterRng) -> np.ndarray:
    rows = []
    for ph, pitch, dur in zip(seq.phoneme_ids, seq.pitches, seq.durations):
        frame = mel["phoneme"][ph] + mel["pitch"][pitch] + mel["singer"][singer_id]
        rows.extend([frame] * dur)
    target = np.stack(rows)
    return target + noise_scale * rng.normal(target.shape)


def make_synthetic_corpus(cfg: CorpusConfig, seed: int, lexicon: UnifiedLexicon,
                          mel_bins: int) -> SyntheticCorpus:
    """Build the corpus deterministically from (cfg, seed, lexicon)."""
    languages = list(Language)[: cfg.language_count]
    root = CounterRng(seed).substream("corpus")
    render = root.substream("render")
    mel = {
        "phoneme": render.substream("phoneme").normal((lexicon.vocab_size, mel_bins)),
        "pitch": render.substream("pitch").normal((128, mel_bins)),
        "singer": render.substream("singer").normal((cfg.singer_count, mel_bins)),
    }
    if cfg.syllable_pool == "shared":
        per_language = shared_syllable_pools(lexicon, languages)
    else:
        per_language = {
            lang: sorted(lexicon.entries[lang]) for lang in languages
        }
    corpus = SyntheticCorpus(singer_count=cfg.singer_count,
                             language_count=cfg.language_count)
    for i in range(cfg.items):
        singer_id = i % cfg.singer_count
        language = languages[singer_id]
        item_rng = root.substream("item", i)
        events = _random_events(cfg, language, per_language[language], item_rng)
        seq = score_to_sequences(Score(events), lexicon, language)
        target = _render_target(seq, singer_id, mel, cfg.noise_scale,
                                item_rng.substream("noise"))
        corpus.items.append(CorpusItem(seq, target, singer_id, language.index))
    return corpus
