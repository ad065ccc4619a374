"""Generative radiology event extraction: prompts, output grammars,
pipelines, span alignment, BM25 context retrieval and event-level F1."""

__version__ = "0.1.0"

from .core import AnatomyEntity, Corpus, Document, Event, Sentence, Span, Trigger, overlaps
from .ontology import AnatomyLabel, Ontology, TriggerType, parse_label, render_ontology

__all__ = [
    "AnatomyEntity", "AnatomyLabel", "Corpus", "Document", "Event", "Ontology", "Sentence",
    "Span", "Trigger", "TriggerType", "overlaps", "parse_label", "render_ontology",
]
