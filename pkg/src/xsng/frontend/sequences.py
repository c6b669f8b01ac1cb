"""Score -> aligned phoneme/pitch/duration sequences.

A note's frame budget is split across its phonemes with a fixed rule:
leading consonants (everything before the first vowel) together receive
30% of the frames, at least one frame each, divided equally; the vowel
nucleus and any trailing phonemes share the remainder in equal
proportions.  Integer leftovers go to the earlier phonemes of each
group, so the split is deterministic and conserves the frame total
exactly.  A syllable with no vowel (e.g. a syllabic nasal) is treated
as all nucleus.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ContractError, ValidationError
from .lexicon import UnifiedLexicon
from .score import Language, Score


@dataclass
class SequenceTriple:
    """Per-phoneme model inputs for one single-language segment."""
    phoneme_ids: list[int]
    pitches: list[int]
    durations: list[int]
    language_id: int
    source_events: list[int]  # index into Score.events per phoneme

    def __post_init__(self):
        n = len(self.phoneme_ids)
        if not (len(self.pitches) == len(self.durations) == len(self.source_events) == n):
            raise ContractError("sequence fields must have equal lengths")
        if any(d < 1 for d in self.durations):
            raise ContractError("durations must be positive")

    @property
    def total_frames(self) -> int:
        return sum(self.durations)

    def to_json_dict(self) -> dict:
        return {
            "phoneme_ids": self.phoneme_ids,
            "pitches": self.pitches,
            "durations": self.durations,
            "language_id": self.language_id,
            "source_events": self.source_events,
        }


def split_note_frames(symbols: tuple[str, ...], lexicon: UnifiedLexicon,
                      frames: int) -> list[int]:
    """Per-phoneme frame counts for one note; sums to frames exactly."""
    n = len(symbols)
    if frames < n:
        raise ValidationError(
            f"note of {frames} frame(s) cannot cover {n} phonemes")

    first_vowel = next((i for i, s in enumerate(symbols) if lexicon.is_vowel(s)), None)
    leading = first_vowel if first_vowel is not None else 0
    trailing = n - leading

    # 30% to the leading consonants, floored in exact integer arithmetic,
    # clamped so both groups keep at least one frame per phoneme.
    share = (3 * frames) // 10 if leading else 0
    share = max(share, leading)
    share = min(share, frames - trailing)

    out = []
    if leading:
        base, extra = divmod(share, leading)
        out.extend(base + (1 if i < extra else 0) for i in range(leading))
    rem = frames - share
    base, extra = divmod(rem, trailing)
    out.extend(base + (1 if i < extra else 0) for i in range(trailing))
    return out


def score_to_sequences(score: Score, lexicon: UnifiedLexicon,
                       language: Language) -> SequenceTriple:
    """Encode a score against one language's lexicon.

    Rests map to the reserved phoneme id 0 with pitch 0 and keep their
    full duration.  Frame totals are conserved event by event.
    """
    phoneme_ids: list[int] = []
    pitches: list[int] = []
    durations: list[int] = []
    source_events: list[int] = []

    for idx, event in enumerate(score.events):
        if event.is_rest:
            phoneme_ids.append(0)
            pitches.append(0)
            durations.append(event.duration_frames)
            source_events.append(idx)
            continue
        if event.language is not language:
            raise ValidationError(
                f"event {idx} is {event.language.value} but the sequence is "
                f"encoded as {language.value}; one language per sequence")
        try:
            symbols = lexicon.ipa(event.syllable, language)
        except ValidationError:
            raise ValidationError(
                f"event {idx}: syllable {event.syllable!r} not in the "
                f"{language.value} lexicon") from None
        ids = lexicon.encode(event.syllable, language)
        frames = split_note_frames(symbols, lexicon, event.duration_frames)
        phoneme_ids.extend(ids)
        pitches.extend([event.midi_pitch] * len(ids))
        durations.extend(frames)
        source_events.extend([idx] * len(ids))

    return SequenceTriple(phoneme_ids=phoneme_ids, pitches=pitches,
                          durations=durations, language_id=language.index,
                          source_events=source_events)
