"""Map predicted surface strings back to character spans of the input sentence.

Single-token terms match a whole whitespace token with the same normalized
form. Multi-token terms match the sentence region sharing the longest common
normalized substring with the term, snapped outward to token boundaries.
Ties go to the leftmost candidate, or, when an anchor span is given (anatomy
terms anchored on their trigger), to the candidate whose midpoint is nearest
the anchor's.
"""
from __future__ import annotations

import string
import unicodedata
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .core import Event, Sentence, Span, overlaps

_ASCII_PUNCT = frozenset(string.punctuation)


def _is_punct(ch: str) -> bool:
    return ch in _ASCII_PUNCT or unicodedata.category(ch).startswith("P")


def normalize(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace. Idempotent."""
    stripped = "".join(ch for ch in text.lower() if not _is_punct(ch))
    return " ".join(stripped.split())


@dataclass(frozen=True)
class Token:
    start: int
    end: int
    norm: str


def tokenize(sentence: str) -> list[Token]:
    tokens = []
    i, n = 0, len(sentence)
    while i < n:
        while i < n and sentence[i].isspace():
            i += 1
        if i >= n:
            break
        j = i
        while j < n and not sentence[j].isspace():
            j += 1
        tokens.append(Token(i, j, normalize(sentence[i:j])))
        i = j
    return tokens


def _lcs_candidates(tokens: Sequence[Token], term_norm: str) -> list[tuple[int, int]]:
    # Normalized sentence string with a char -> token index map; tokens that
    # normalize to nothing (bare punctuation) are skipped.
    chars: list[str] = []
    owner: list[int] = []
    for idx, tok in enumerate(tokens):
        if not tok.norm:
            continue
        if chars:
            chars.append(" ")
            owner.append(-1)
        chars.extend(tok.norm)
        owner.extend([idx] * len(tok.norm))
    s = "".join(chars)
    if not s:
        return []

    best = 0
    ends: list[int] = []
    prev = [0] * (len(term_norm) + 1)
    for i, sc in enumerate(s):
        cur = [0] * (len(term_norm) + 1)
        for j, tc in enumerate(term_norm):
            if sc == tc:
                length = prev[j] + 1
                cur[j + 1] = length
                if length > best:
                    best, ends = length, [i]
                elif length == best and (not ends or ends[-1] != i):
                    ends.append(i)
        prev = cur
    if best == 0:
        return []

    aligned, loose = [], []
    for end in ends:
        start = end - best + 1
        lo, hi = start, end
        while lo <= hi and s[lo] == " ":
            lo += 1
        while hi >= lo and s[hi] == " ":
            hi -= 1
        if lo > hi:
            continue
        cand = (owner[lo], owner[hi])
        on_boundary = (start == 0 or s[start - 1] == " ") and (end == len(s) - 1 or s[end + 1] == " ")
        (aligned if on_boundary else loose).append(cand)
    picked = aligned or loose
    return list(dict.fromkeys(picked))


def _refine(sentence: str, tokens: Sequence[Token], first: int, last: int, term: str) -> Span:
    start, end = tokens[first].start, tokens[last].end
    region = sentence[start:end]
    needle = term.strip()
    if needle:
        at = region.lower().find(needle.lower())
        if at >= 0:
            return Span(start + at, start + at + len(needle))
    while start < end and _is_punct(sentence[start]):
        start += 1
    while end > start and _is_punct(sentence[end - 1]):
        end -= 1
    if start == end:
        return Span(tokens[first].start, tokens[last].end)
    return Span(start, end)


def candidate_spans(sentence: str, term: str) -> list[Span]:
    """All equally-scored spans for ``term``, left to right."""
    tokens = tokenize(sentence)
    words = normalize(term).split()
    if not words:
        return []
    if len(words) == 1:
        ranges = [(i, i) for i, tok in enumerate(tokens) if tok.norm == words[0]]
    else:
        if not set(words) & {tok.norm for tok in tokens}:
            return []
        ranges = _lcs_candidates(tokens, " ".join(words))
    spans = [_refine(sentence, tokens, i, j, term) for i, j in ranges]
    return sorted(dict.fromkeys(spans))


def _pick(spans: Sequence[Span], anchor: Optional[Span]) -> Span:
    if anchor is None:
        return spans[0]
    return min(spans, key=lambda s: (abs(s.midpoint2 - anchor.midpoint2), s.start))


def align_term(
    sentence: str,
    term: str,
    anchor: Optional[Span] = None,
    exclude: Iterable[Span] = (),
) -> Optional[Span]:
    """Locate ``term`` in ``sentence``; ``None`` means unalignable.

    ``exclude`` lists spans already claimed by earlier entities with the same
    role, so repeated texts land on successive occurrences. When every
    candidate is claimed the best claimed one is reused.
    """
    spans = candidate_spans(sentence, term)
    if not spans:
        return None
    taken = list(exclude)
    free = [s for s in spans if not any(overlaps(s, t) for t in taken)]
    return _pick(free or spans, anchor)


def attach_spans(sentence: str | Sentence, events: Iterable[Event]) -> list[Event]:
    """Fill in missing trigger and anatomy spans; existing spans are kept."""
    text = sentence.text if isinstance(sentence, Sentence) else sentence
    events = list(events)
    claimed_triggers = [e.trigger.span for e in events if e.trigger.span is not None]
    out = []
    for event in events:
        trigger = event.trigger
        if trigger.span is None:
            span = align_term(text, trigger.text, exclude=claimed_triggers)
            if span is not None:
                claimed_triggers.append(span)
                trigger = replace(trigger, span=span)
        claimed = [a.span for a in event.anatomies if a.span is not None]
        anatomies = []
        for anatomy in event.anatomies:
            if anatomy.span is None:
                span = align_term(text, anatomy.text, anchor=trigger.span, exclude=claimed)
                if span is not None:
                    claimed.append(span)
                    anatomy = replace(anatomy, span=span)
            anatomies.append(anatomy)
        out.append(Event(trigger, tuple(anatomies)))
    return out
