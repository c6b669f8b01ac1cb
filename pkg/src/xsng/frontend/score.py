"""Musical score parsing.

A score document is line-oriented JSON: one object per line with keys
"syllable", "lang", "pitch", "dur".  Lines starting with '#' and blank
lines are skipped.  Pitch is a raw MIDI number 0..127 with 0 reserved
for rests; rests must carry an empty syllable.  Durations are integer
frame counts >= 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from ..errors import ParseError, ValidationError

_FIELDS = {"syllable", "lang", "pitch", "dur"}


class Language(Enum):
    ZH = "ZH"
    JA = "JA"
    EN = "EN"

    @property
    def index(self) -> int:
        return list(Language).index(self)


@dataclass(frozen=True)
class NoteEvent:
    syllable: str
    language: Language
    midi_pitch: int
    duration_frames: int

    @property
    def is_rest(self) -> bool:
        return self.midi_pitch == 0


@dataclass
class Score:
    events: list[NoteEvent] = field(default_factory=list)
    frame_rate_hz: float = 100.0


def parse_score(document: str, frame_rate_hz: float = 100.0) -> Score:
    events = []
    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"line {lineno}: malformed JSON ({e.msg})") from e
        if not isinstance(obj, dict):
            raise ParseError(f"line {lineno}: expected a JSON object")
        events.append(_event_from(obj, lineno))
    if not any(not e.is_rest for e in events):
        raise ValidationError("score contains no non-rest events")
    return Score(events=events, frame_rate_hz=frame_rate_hz)


def _event_from(obj: dict, lineno: int) -> NoteEvent:
    unknown = set(obj) - _FIELDS
    if unknown:
        raise ValidationError(f"line {lineno}: unknown field {sorted(unknown)[0]!r}")
    missing = _FIELDS - set(obj)
    if missing:
        raise ValidationError(f"line {lineno}: missing field {sorted(missing)[0]!r}")

    syllable, lang, pitch, dur = obj["syllable"], obj["lang"], obj["pitch"], obj["dur"]
    if not isinstance(syllable, str):
        raise ValidationError(f"line {lineno}: field 'syllable' must be a string")
    try:
        language = Language(lang)
    except ValueError:
        raise ValidationError(f"line {lineno}: field 'lang' must be one of "
                              f"{[l.value for l in Language]}, got {lang!r}") from None
    if not isinstance(pitch, int) or isinstance(pitch, bool) or not 0 <= pitch <= 127:
        raise ValidationError(f"line {lineno}: field 'pitch' must be an integer in "
                              f"0..127, got {pitch!r}")
    if not isinstance(dur, int) or isinstance(dur, bool) or dur < 1:
        raise ValidationError(f"line {lineno}: field 'dur' must be an integer >= 1, "
                              f"got {dur!r}")
    if pitch == 0 and syllable:
        raise ValidationError(f"line {lineno}: rest events must have an empty syllable")
    if pitch > 0 and not syllable:
        raise ValidationError(f"line {lineno}: note events need a syllable")
    return NoteEvent(syllable, language, pitch, dur)
