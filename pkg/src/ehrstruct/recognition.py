"""Forward maximum matching over normalized chunks.

Scans left to right, emitting the longest lexicon match at each word-boundary
position and resuming after it. Matched spans map back to raw-text offsets via
the note's offset map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .preprocess import Chunk, NormalizedNote
from .terminology import (
    AbbreviationTable,
    LexiconEntry,
    SemanticType,
    TermIndex,
    is_alnum,
    word_start,
)


@dataclass
class Mention:
    note_id: str
    chunk_index: int
    norm_start: int
    norm_end: int
    raw_start: int
    raw_end: int
    surface: str  # raw casing, internal line breaks rendered as spaces
    canonical_phrase: str
    semantic_type: SemanticType
    concept_id: str | None = None
    occurrence_ordinal: int = 0
    ambiguous: bool = False


def recognize(chunk: Chunk, index: TermIndex, note: NormalizedNote) -> list[Mention]:
    """Forward-maximum-match the chunk against the index (unfiltered)."""
    text = chunk.text
    lowered = text.lower()
    mentions: list[Mention] = []
    i = 0
    n = len(text)
    while i < n:
        if not is_alnum(text[i]) or not word_start(text, i):
            i += 1
            continue
        length = index.longest_match(lowered, i)
        if length is None:
            # skip the rest of this word
            while i < n and is_alnum(text[i]):
                i += 1
            continue
        surface = text[i : i + length]
        entry = index.entry_for(lowered[i : i + length])
        norm_start = chunk.norm_start + i
        norm_end = norm_start + length
        raw_start, raw_end = note.raw_span(norm_start, norm_end)
        mentions.append(
            Mention(
                note_id=chunk.note_id,
                chunk_index=chunk.chunk_index,
                norm_start=norm_start,
                norm_end=norm_end,
                raw_start=raw_start,
                raw_end=raw_end,
                surface=surface,
                canonical_phrase=surface,
                semantic_type=entry.semantic_type,
                concept_id=entry.concept_id,
            )
        )
        i += length
    return mentions


def brute_force_recognize(text: str, surfaces: list[str]) -> list[tuple[int, int]]:
    """Independent longest-match scanner used as the matching oracle.

    At each word-boundary position tries every surface by string comparison
    and keeps the longest that ends at a word boundary, then resumes after it.
    """
    lowered = text.lower()
    spans: list[tuple[int, int]] = []
    i = 0
    n = len(text)
    while i < n:
        if not is_alnum(text[i]) or not word_start(text, i):
            i += 1
            continue
        best = 0
        for s in surfaces:
            if len(s) > best and lowered.startswith(s, i) and word_start(lowered, i + len(s)):
                best = len(s)
        if best:
            spans.append((i, i + best))
            i += best
        else:
            while i < n and is_alnum(text[i]):
                i += 1
    return spans


def filter_reportable(mentions: list[Mention]) -> list[Mention]:
    return [m for m in mentions if m.semantic_type.reportable]


def expand_abbreviation(m: Mention, table: AbbreviationTable) -> Mention:
    """Expand an unambiguous abbreviation in place; flag ambiguous ones."""
    expansions = table.expansions(m.surface)
    if len(expansions) == 1:
        exp = expansions[0]
        m.canonical_phrase = exp.full_form
        if exp.semantic_type is not None:
            m.semantic_type = exp.semantic_type
    elif len(expansions) >= 2:
        m.canonical_phrase = m.surface
        m.ambiguous = True
    return m


def assign_ordinals(mentions: list[Mention]) -> list[Mention]:
    """Number repeated canonical phrases within a note, in document order."""
    counts: dict[str, int] = {}
    for m in sorted(mentions, key=lambda m: m.norm_start):
        key = m.canonical_phrase.lower()
        counts[key] = counts.get(key, 0) + 1
        m.occurrence_ordinal = counts[key]
    return mentions


def recognize_note(
    note: NormalizedNote,
    chunks: list[Chunk],
    index: TermIndex,
    abbreviations: AbbreviationTable | None = None,
) -> list[Mention]:
    """Full per-note recognition: match, filter, expand, order."""
    mentions: list[Mention] = []
    for chunk in chunks:
        mentions.extend(recognize(chunk, index, note))
    mentions = filter_reportable(mentions)
    if abbreviations is not None:
        for m in mentions:
            expand_abbreviation(m, abbreviations)
    mentions.sort(key=lambda m: m.norm_start)
    return assign_ordinals(mentions)
