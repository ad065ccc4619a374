"""Okapi BM25 sentence retrieval over an unlabeled target-domain pool.

IDF follows the Okapi form ``ln((N - n + 0.5) / (n + 0.5))``; negative values
(terms in more than half the pool) are floored to ``epsilon`` times the mean
positive IDF so scores stay non-negative.
"""
from __future__ import annotations

import gzip
import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .align import normalize
from .ontology import TermList, default_term_list

SNAPSHOT_FORMAT = "radex-bm25"
SNAPSHOT_VERSION = 1


class EmptyIndex(ValueError):
    pass


class UnknownSentenceId(KeyError):
    pass


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class RetrievalConfig:
    k1: float = 1.5
    b: float = 0.75
    epsilon: float = 0.25
    top_k: int = 1
    min_tokens: int = 3

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError("k1 must be positive")
        if not 0 <= self.b <= 1:
            raise ValueError("b must lie in [0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")


def normalize_query(text: str) -> list[str]:
    return normalize(text).split()


@dataclass(frozen=True)
class Hit:
    id: int
    text: str
    score: float


class SearchIndex:
    """Immutable BM25 index; safe for concurrent queries once built."""

    def __init__(self, sentences: Iterable[str], config: RetrievalConfig = RetrievalConfig()):
        self.config = config
        self.sentences: tuple[str, ...] = tuple(sentences)
        self.tokens = [normalize_query(s) for s in self.sentences]
        self._keys = [" ".join(t) for t in self.tokens]
        self.lengths = [len(t) for t in self.tokens]
        self.term_freqs = [Counter(t) for t in self.tokens]
        self.doc_freqs: Counter[str] = Counter()
        for tf in self.term_freqs:
            self.doc_freqs.update(tf.keys())
        n = len(self.sentences)
        self.avgdl = sum(self.lengths) / n if n else 0.0
        raw = {t: math.log((n - df + 0.5) / (df + 0.5)) for t, df in self.doc_freqs.items()}
        positive = [v for v in raw.values() if v > 0]
        floor = config.epsilon * (sum(positive) / len(positive)) if positive else 0.0
        self.idf = {t: (v if v >= 0 else floor) for t, v in raw.items()}

    def __len__(self) -> int:
        return len(self.sentences)

    def score(self, query: Sequence[str], sentence_id: int) -> float:
        if not 0 <= sentence_id < len(self.sentences):
            raise UnknownSentenceId(sentence_id)
        k1, b = self.config.k1, self.config.b
        tf = self.term_freqs[sentence_id]
        # avgdl is 0 only when every pool sentence is empty; then no term matches
        norm = k1 * (1 - b + b * self.lengths[sentence_id] / self.avgdl) if self.avgdl else k1
        total = 0.0
        for term in query:
            f = tf.get(term, 0)
            if f:
                total += self.idf[term] * f * (k1 + 1) / (f + norm)
        return total

    def scores(self, query: Sequence[str]) -> list[float]:
        return [self.score(query, i) for i in range(len(self.sentences))]

    def retrieve(self, query: str, top_k: Optional[int] = None) -> list[Hit]:
        """Best-scoring pool sentences for ``query``, never the query itself.

        Self-exclusion compares normalized text, so a copy of the query that
        was added to the pool is skipped too. Ties keep pool order.
        """
        if not self.sentences:
            raise EmptyIndex("retrieval index is empty")
        top_k = self.config.top_k if top_k is None else top_k
        q = normalize_query(query)
        own = " ".join(q)
        scores = self.scores(q)
        ranked = sorted(
            (i for i in range(len(self.sentences)) if self._keys[i] != own),
            key=lambda i: -scores[i],
        )
        return [Hit(i, self.sentences[i], scores[i]) for i in ranked[:top_k]]

    def save(self, path: str | Path) -> None:
        payload = {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "config": asdict(self.config),
            "sentences": list(self.sentences),
        }
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str | Path) -> "SearchIndex":
        try:
            with gzip.open(path, "rt", encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SnapshotError(f"{path}: not a readable index snapshot ({exc})") from exc
        if payload.get("format") != SNAPSHOT_FORMAT:
            raise SnapshotError(f"{path}: unexpected snapshot format {payload.get('format')!r}")
        if payload.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(f"{path}: unsupported snapshot version {payload.get('version')!r}")
        return cls(payload["sentences"], RetrievalConfig(**payload["config"]))


def build_index(sentences: Iterable[str], config: RetrievalConfig = RetrievalConfig()) -> SearchIndex:
    return SearchIndex(sentences, config)


def score(index: SearchIndex, query: Sequence[str], sentence_id: int) -> float:
    return index.score(query, sentence_id)


def retrieve(index: SearchIndex, query: str, top_k: Optional[int] = None) -> list[Hit]:
    return index.retrieve(query, top_k)


def term_pattern(terms: Iterable[str]) -> re.Pattern:
    """Case-insensitive whole-word matcher for any of ``terms``."""
    alts = sorted({r"\s+".join(map(re.escape, t.split())) for t in terms}, key=len, reverse=True)
    return re.compile(r"(?<!\w)(?:" + "|".join(alts) + r")(?!\w)", re.I)


def filter_corpus(
    sentences: Iterable[str],
    terms: Optional[TermList] = None,
    min_tokens: int = RetrievalConfig.min_tokens,
) -> list[str]:
    """Keep sentences with at least ``min_tokens`` tokens that mention a term."""
    pattern = term_pattern(terms if terms is not None else default_term_list())
    return [
        s for s in sentences
        if len(normalize_query(s)) >= min_tokens and pattern.search(s)
    ]
