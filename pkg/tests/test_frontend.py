"""Score parsing, unified lexicon, and duration splitting."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xsng.errors import ParseError, ValidationError
from xsng.frontend import (
    Language,
    build_lexicon,
    parse_score,
    score_to_sequences,
    shipped_lexicon,
    split_note_frames,
)

LEX = shipped_lexicon()


# ------------------------------------------------------------- parsing

GOOD = """
# comment line
{"syllable": "ka", "lang": "JA", "pitch": 60, "dur": 10}

{"syllable": "", "lang": "JA", "pitch": 0, "dur": 5}
{"syllable": "mi", "lang": "JA", "pitch": 64, "dur": 8}
"""


def test_parse_skips_comments_and_blanks():
    score = parse_score(GOOD)
    assert len(score.events) == 3
    assert score.events[0].syllable == "ka"
    assert score.events[1].is_rest
    assert score.events[2].midi_pitch == 64


def test_parse_malformed_json_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_score('{"syllable": "ka", "lang": "JA", "pitch": 60, "dur": 10}\n{oops')
    assert "line 2" in str(exc.value)


def test_parse_pitch_out_of_range_reports_line_and_field():
    with pytest.raises(ValidationError) as exc:
        parse_score('{"syllable": "ka", "lang": "JA", "pitch": 128, "dur": 4}')
    msg = str(exc.value)
    assert "line 1" in msg and "pitch" in msg


def test_parse_unknown_field_rejected():
    with pytest.raises(ValidationError) as exc:
        parse_score('{"syllable": "ka", "lang": "JA", "pitch": 60, "dur": 4, "velo": 9}')
    assert "velo" in str(exc.value)


def test_parse_rest_with_syllable_rejected():
    with pytest.raises(ValidationError):
        parse_score('{"syllable": "ka", "lang": "JA", "pitch": 0, "dur": 4}')


def test_parse_zero_duration_rejected():
    with pytest.raises(ValidationError):
        parse_score('{"syllable": "ka", "lang": "JA", "pitch": 60, "dur": 0}')


def test_parse_all_rest_score_rejected():
    with pytest.raises(ValidationError):
        parse_score('{"syllable": "", "lang": "JA", "pitch": 0, "dur": 4}')


# ------------------------------------------------------------- lexicon

def test_symbol_ids_contiguous_from_one_in_codepoint_order():
    ids = sorted(LEX.symbol_table.values())
    assert ids == list(range(1, len(LEX.symbol_table) + 1))
    by_codepoint = sorted(LEX.symbol_table)
    assert [LEX.symbol_table[s] for s in by_codepoint] == ids


def test_shared_symbols_share_ids_across_languages():
    zh_ma = LEX.encode("ma", Language.ZH)
    ja_ma = LEX.encode("ma", Language.JA)
    assert zh_ma == ja_ma and len(zh_ma) == 2


def test_union_table_oracle():
    # Independent recomputation of the union straight from the entries.
    union = set()
    for lang_entries in LEX.entries.values():
        for symbols in lang_entries.values():
            union.update(symbols)
    assert set(LEX.symbol_table) == union
    assert LEX.vocab_size == len(union) + 1


def test_shipped_lexicon_sizes():
    assert len(LEX.entries[Language.ZH]) == 30
    assert len(LEX.entries[Language.JA]) == 25
    assert len(LEX.entries[Language.EN]) == 35


def test_shipped_lexicons_share_vocalise_syllables():
    # The drill syllables encode identically in all three languages, which
    # also gives the cross-lingual id-sharing contract natural coverage.
    for syllable in ("ma", "mo", "na", "ni"):
        ids = {tuple(LEX.encode(syllable, lang)) for lang in Language}
        assert len(ids) == 1, syllable


def test_unknown_symbol_in_lexicon_rejected(tmp_path):
    bad = tmp_path / "bad.lex"
    bad.write_text("zz\tq Q\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        build_lexicon({Language.ZH: bad})


def test_duplicate_syllable_rejected(tmp_path):
    bad = tmp_path / "dup.lex"
    bad.write_text("ma\tm a\nma\tm a\n", encoding="utf-8")
    with pytest.raises(ParseError):
        build_lexicon({Language.ZH: bad})


# ------------------------------------------------------- duration split

def test_split_ka_ten_frames():
    assert split_note_frames(LEX.ipa("ka", Language.JA), LEX, 10) == [3, 7]


def test_split_vowel_initial_syllable():
    # "and" = ae n d, no leading consonant: equal thirds with the
    # leftover frame going to the earliest phoneme.
    assert split_note_frames(LEX.ipa("and", Language.EN), LEX, 7) == [3, 2, 2]


def test_split_consonant_vowel_consonant():
    # "man" = m ae n: m takes 30% of 10 = 3, nucleus+coda share 7.
    assert split_note_frames(LEX.ipa("man", Language.EN), LEX, 10) == [3, 4, 3]


def test_split_no_vowel_syllable():
    assert split_note_frames(LEX.ipa("n", Language.JA), LEX, 6) == [6]


def test_split_minimum_one_frame_each():
    assert split_note_frames(LEX.ipa("man", Language.EN), LEX, 3) == [1, 1, 1]


def test_split_note_too_short_rejected():
    with pytest.raises(ValidationError):
        split_note_frames(LEX.ipa("ka", Language.JA), LEX, 1)


_entries = [(lang, syl) for lang in Language for syl in LEX.entries[lang]]


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=len(_entries) - 1),
       st.integers(min_value=0, max_value=40))
def test_split_conserves_frames(entry_idx, extra):
    lang, syl = _entries[entry_idx]
    symbols = LEX.ipa(syl, lang)
    frames = len(symbols) + extra
    split = split_note_frames(symbols, LEX, frames)
    assert sum(split) == frames
    assert all(f >= 1 for f in split)
    assert len(split) == len(symbols)


# --------------------------------------------------- score_to_sequences

def test_sequences_rest_encoding():
    seq = score_to_sequences(parse_score(GOOD), LEX, Language.JA)
    # ka -> 2 phonemes, rest -> 1, mi -> 2
    assert seq.phoneme_ids[2] == 0
    assert seq.pitches[2] == 0
    assert seq.durations[2] == 5
    assert seq.source_events == [0, 0, 1, 2, 2]
    assert seq.language_id == Language.JA.index


def test_sequences_conserve_total_frames():
    score = parse_score(GOOD)
    seq = score_to_sequences(score, LEX, Language.JA)
    assert seq.total_frames == sum(e.duration_frames for e in score.events)


def test_sequences_pitch_copied_per_phoneme():
    seq = score_to_sequences(parse_score(GOOD), LEX, Language.JA)
    assert seq.pitches[0] == seq.pitches[1] == 60


def test_sequences_oov_names_syllable_and_position():
    doc = '{"syllable": "xyzzy", "lang": "JA", "pitch": 60, "dur": 4}'
    with pytest.raises(ValidationError) as exc:
        score_to_sequences(parse_score(doc), LEX, Language.JA)
    msg = str(exc.value)
    assert "xyzzy" in msg and "event 0" in msg


def test_sequences_deterministic():
    a = score_to_sequences(parse_score(GOOD), LEX, Language.JA)
    b = score_to_sequences(parse_score(GOOD), LEX, Language.JA)
    assert a == b


def test_sequences_reject_language_mismatch():
    doc = '{"syllable": "ka", "lang": "ZH", "pitch": 60, "dur": 4}'
    with pytest.raises(ValidationError) as exc:
        score_to_sequences(parse_score(doc), LEX, Language.JA)
    assert "ZH" in str(exc.value) and "JA" in str(exc.value)
