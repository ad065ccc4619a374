"""Document- and domain-level context bundles for normalization prompts.

Exam type, section header and the prior sentence go before the input
sentence in their natural order; the following sentence and retrieved
sentences go between the question and the ontology.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol

from .align import normalize
from .core import Document


class ContextKind(str, Enum):
    ADJACENT = "adjacent"
    METADATA = "metadata"
    BM25 = "bm25"
    ALL = "all"


class RetrieverMissing(ValueError):
    pass


class Retriever(Protocol):
    def retrieve(self, query: str, top_k: Optional[int] = None) -> list: ...


@dataclass(frozen=True)
class ContextBundle:
    prepended: tuple[str, ...] = ()
    appended: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.prepended or self.appended)


def extract_section_header(document: Document, sentence_index: int) -> Optional[str]:
    """Prefix through the first ':' of the nearest earlier sentence containing one."""
    for i in range(sentence_index - 1, -1, -1):
        text = document.sentences[i]
        if ":" in text:
            header = text[: text.index(":") + 1].strip()
            return header or None
    return None


def gather(
    document: Document,
    sentence_index: int,
    kind: ContextKind,
    retriever: Optional[Retriever] = None,
    top_k: int = 1,
) -> ContextBundle:
    kind = ContextKind(kind)
    if kind in (ContextKind.BM25, ContextKind.ALL) and retriever is None:
        raise RetrieverMissing(f"context kind {kind.value!r} needs a retrieval index")
    sentence = document.sentences[sentence_index]
    own = normalize(sentence)
    use_adjacent = kind in (ContextKind.ADJACENT, ContextKind.ALL)
    use_metadata = kind in (ContextKind.METADATA, ContextKind.ALL)
    use_bm25 = kind in (ContextKind.BM25, ContextKind.ALL)

    prepended: list[Optional[str]] = []
    appended: list[Optional[str]] = []
    if use_metadata:
        prepended.append(document.exam_type)
        prepended.append(extract_section_header(document, sentence_index))
    if use_adjacent:
        if sentence_index > 0:
            prepended.append(document.sentences[sentence_index - 1])
        if sentence_index + 1 < len(document):
            appended.append(document.sentences[sentence_index + 1])
    if use_bm25:
        appended += [hit.text for hit in retriever.retrieve(sentence, top_k)]

    def keep(items: list[Optional[str]]) -> tuple[str, ...]:
        return tuple(t.strip() for t in items if t and t.strip() and normalize(t) != own)

    return ContextBundle(keep(prepended), keep(appended))
