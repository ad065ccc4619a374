"""Event and document data model plus span arithmetic."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional

from .ontology import AnatomyLabel, TriggerType

SentenceKey = tuple[str, int]


@dataclass(frozen=True, order=True)
class Span:
    """Half-open character interval ``[start, end)`` over a sentence string."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    @property
    def midpoint2(self) -> int:
        # twice the midpoint, to keep distance comparisons in integers
        return self.start + self.end


def overlaps(a: Span, b: Span) -> bool:
    return a.start < b.end and b.start < a.end


@dataclass(frozen=True)
class Trigger:
    text: str
    type: TriggerType
    span: Optional[Span] = None


@dataclass(frozen=True)
class AnatomyEntity:
    text: str
    label: Optional[AnatomyLabel] = None
    span: Optional[Span] = None


@dataclass(frozen=True)
class Event:
    trigger: Trigger
    anatomies: tuple[AnatomyEntity, ...] = ()

    def __post_init__(self):
        if not isinstance(self.anatomies, tuple):
            object.__setattr__(self, "anatomies", tuple(self.anatomies))

    def without_spans(self) -> "Event":
        return Event(
            replace(self.trigger, span=None),
            tuple(replace(a, span=None) for a in self.anatomies),
        )


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    index: int
    text: str

    @property
    def key(self) -> SentenceKey:
        return (self.doc_id, self.index)


@dataclass(frozen=True)
class Document:
    id: str
    sentences: tuple[str, ...]
    exam_type: str = ""

    def __post_init__(self):
        if not isinstance(self.sentences, tuple):
            object.__setattr__(self, "sentences", tuple(self.sentences))

    def __len__(self) -> int:
        return len(self.sentences)

    def sentence(self, index: int) -> Sentence:
        return Sentence(self.id, index, self.sentences[index])

    def iter_sentences(self) -> Iterator[Sentence]:
        for i, text in enumerate(self.sentences):
            yield Sentence(self.id, i, text)


@dataclass
class Corpus:
    documents: list[Document] = field(default_factory=list)

    def __post_init__(self):
        ids = [d.id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise ValueError("document ids must be unique")
        self._by_id = {d.id: d for d in self.documents}

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def document(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    def sentence(self, key: SentenceKey) -> Sentence:
        return self._by_id[key[0]].sentence(key[1])

    def __contains__(self, key: object) -> bool:
        if not (isinstance(key, tuple) and len(key) == 2):
            return False
        doc = self._by_id.get(key[0])
        return doc is not None and isinstance(key[1], int) and 0 <= key[1] < len(doc)

    def iter_sentences(self) -> Iterator[Sentence]:
        for doc in self.documents:
            yield from doc.iter_sentences()

    def sentence_count(self) -> int:
        return sum(len(d) for d in self.documents)


class ViolationKind(str, Enum):
    OUT_OF_BOUNDS = "OutOfBounds"
    TEXT_MISMATCH = "TextMismatch"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    entity: str
    detail: str


def _check(sentence: str, what: str, text: str, span: Optional[Span]) -> list[Violation]:
    if span is None:
        return []
    if span.end > len(sentence):
        return [Violation(ViolationKind.OUT_OF_BOUNDS, what,
                          f"span [{span.start}, {span.end}) exceeds sentence length {len(sentence)}")]
    got = sentence[span.start:span.end]
    if got != text:
        return [Violation(ViolationKind.TEXT_MISMATCH, what, f"span covers {got!r}, text is {text!r}")]
    return []


def validate_event(sentence: str | Sentence, event: Event) -> list[Violation]:
    text = sentence.text if isinstance(sentence, Sentence) else sentence
    found = _check(text, "trigger", event.trigger.text, event.trigger.span)
    for i, anatomy in enumerate(event.anatomies):
        found += _check(text, f"anatomy[{i}]", anatomy.text, anatomy.span)
    return found
