"""Score and pronunciation frontend."""

from .lexicon import (
    UnifiedLexicon,
    build_lexicon,
    shipped_lexicon,
    shipped_lexicon_files,
)
from .score import Language, NoteEvent, Score, parse_score
from .sequences import SequenceTriple, score_to_sequences, split_note_frames

__all__ = [
    "Language", "NoteEvent", "Score", "parse_score",
    "UnifiedLexicon", "build_lexicon", "shipped_lexicon", "shipped_lexicon_files",
    "SequenceTriple", "score_to_sequences", "split_note_frames",
]
