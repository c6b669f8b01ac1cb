"""Unified pronunciation lexicon over a shared phoneme inventory.

Lexicon files map one syllable per line to a space-separated phoneme
sequence ("syllable<TAB>ipa1 ipa2 ...").  All languages draw from a
single symbol inventory, and a symbol shared between languages gets one
id, which is the whole point: the downstream embedding table is common
across languages.  Ids are contiguous from 1 in codepoint order; 0 is
reserved for padding and rests.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import ParseError, ValidationError
from .score import Language

VOWEL = "vowel"
CONSONANT = "consonant"


@dataclass
class UnifiedLexicon:
    entries: dict[Language, dict[str, tuple[str, ...]]]
    symbol_table: dict[str, int]
    symbol_class: dict[str, str]

    @property
    def vocab_size(self) -> int:
        """Embedding rows needed: all symbol ids plus the reserved 0."""
        return len(self.symbol_table) + 1

    def ipa(self, syllable: str, language: Language) -> tuple[str, ...]:
        table = self.entries[language]
        if syllable not in table:
            raise ValidationError(
                f"syllable {syllable!r} not in the {language.value} lexicon")
        return table[syllable]

    def encode(self, syllable: str, language: Language) -> list[int]:
        return [self.symbol_table[s] for s in self.ipa(syllable, language)]

    def is_vowel(self, symbol: str) -> bool:
        return self.symbol_class[symbol] == VOWEL


def _parse_inventory(text: str, origin: str) -> dict[str, str]:
    classes: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"{origin} line {lineno}: expected 'symbol<TAB>class'")
        symbol, cls = parts[0].strip(), parts[1].strip()
        if cls not in (VOWEL, CONSONANT):
            raise ParseError(f"{origin} line {lineno}: unknown class {cls!r}")
        if symbol in classes:
            raise ParseError(f"{origin} line {lineno}: duplicate symbol {symbol!r}")
        classes[symbol] = cls
    return classes


def _parse_lexicon(text: str, origin: str) -> dict[str, tuple[str, ...]]:
    entries: dict[str, tuple[str, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise ParseError(f"{origin} line {lineno}: expected 'syllable<TAB>phonemes'")
        syllable, phon = line.split("\t", 1)
        syllable = syllable.strip()
        symbols = tuple(phon.split())
        if not syllable or not symbols:
            raise ParseError(f"{origin} line {lineno}: empty syllable or phoneme list")
        if syllable in entries:
            raise ParseError(f"{origin} line {lineno}: duplicate syllable {syllable!r}")
        entries[syllable] = symbols
    return entries


def build_lexicon(per_language_files: dict[Language, Path],
                  inventory_file: Path | None = None) -> UnifiedLexicon:
    """Assemble the unified lexicon from per-language files.

    Symbol ids are assigned after the union is known, so they do not
    depend on which languages are present or on file order.
    """
    if inventory_file is None:
        classes = _parse_inventory(_shipped_text("ipa_inventory.tsv"), "inventory")
    else:
        classes = _parse_inventory(Path(inventory_file).read_text(encoding="utf-8"),
                                   str(inventory_file))

    entries: dict[Language, dict[str, tuple[str, ...]]] = {}
    used: set[str] = set()
    for language, path in per_language_files.items():
        table = _parse_lexicon(Path(path).read_text(encoding="utf-8"), str(path))
        for syllable, symbols in table.items():
            for s in symbols:
                if s not in classes:
                    raise ValidationError(
                        f"{path}: syllable {syllable!r} uses symbol {s!r} "
                        f"missing from the inventory")
            used.update(symbols)
        entries[language] = table

    symbol_table = {s: i for i, s in enumerate(sorted(used), start=1)}
    return UnifiedLexicon(entries=entries, symbol_table=symbol_table,
                          symbol_class={s: classes[s] for s in used})


def _shipped_text(name: str) -> str:
    return (resources.files("xsng.frontend") / "data" / name).read_text(encoding="utf-8")


def shipped_lexicon_files() -> dict[Language, Path]:
    base = resources.files("xsng.frontend") / "data"
    return {Language.ZH: Path(str(base / "zh.lex")),
            Language.JA: Path(str(base / "ja.lex")),
            Language.EN: Path(str(base / "en.lex"))}


def shipped_lexicon() -> UnifiedLexicon:
    """The demo lexicon that ships with the package (ZH/JA/EN)."""
    return build_lexicon(shipped_lexicon_files())
