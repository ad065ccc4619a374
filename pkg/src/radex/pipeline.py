"""Three-, two- and one-step extraction flows over a text-to-text backend.

Every decoding pass is logged per sentence so runs can be costed in
passes/sample and tokens/sample. Sentences are independent and may run in
parallel; passes within a sentence are sequential.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

from .align import align_term, attach_spans
from .backends import ModelBackend
from .context import ContextBundle, ContextKind, Retriever, RetrieverMissing, gather
from .core import AnatomyEntity, Corpus, Document, Event, SentenceKey, Span
from .ontology import DEFAULT_ONTOLOGY, AnatomyLabel, Ontology
from .textio import (
    MAX_OUTPUT_TOKENS,
    PromptRecord,
    StepKind,
    build_prompt,
    make_focus,
    parse_blocks,
    parse_classification_blocks,
    parse_vanilla,
)

log = logging.getLogger(__name__)

Tokenizer = Callable[[str], Sequence]


class PipelineKind(str, Enum):
    THREE_STEP = "three-step"
    TWO_STEP = "two-step"
    ONE_STEP_VANILLA = "one-step-vanilla"
    ONE_STEP_BLOCKS = "one-step-blocks"
    ONE_STEP_BLOCKS_CONTEXT = "one-step-blocks-context"

    @property
    def output_format(self) -> str:
        if self in (PipelineKind.ONE_STEP_BLOCKS, PipelineKind.ONE_STEP_BLOCKS_CONTEXT):
            return "blocks"
        return "vanilla"


@dataclass
class RunConfig:
    context: ContextKind = ContextKind.ALL
    retriever: Optional[Retriever] = None
    max_output_tokens: int = MAX_OUTPUT_TOKENS
    workers: int = 1
    ontology: Ontology = DEFAULT_ONTOLOGY


@dataclass
class PassLog:
    key: SentenceKey
    passes: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    steps: list[StepKind] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def tokens(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass
class RunResult:
    predictions: dict[SentenceKey, list[Event]]
    logs: dict[SentenceKey, PassLog]
    warnings: dict[SentenceKey, list[str]]

    @property
    def failures(self) -> list[SentenceKey]:
        return [k for k, entry in self.logs.items() if entry.error is not None]


@dataclass(frozen=True)
class CostReport:
    samples: int
    passes_per_sample: float
    tokens_per_sample: float
    input_tokens_per_sample: float
    output_tokens_per_sample: float
    empty: bool

    def to_json(self) -> dict:
        return {
            "samples": self.samples,
            "passes_per_sample": self.passes_per_sample,
            "tokens_per_sample": self.tokens_per_sample,
            "input_tokens_per_sample": self.input_tokens_per_sample,
            "output_tokens_per_sample": self.output_tokens_per_sample,
            "empty": self.empty,
        }


def cost_report(logs: Sequence[PassLog] | dict) -> CostReport:
    entries = list(logs.values()) if isinstance(logs, dict) else list(logs)
    n = len(entries)
    if n == 0:
        return CostReport(0, 0.0, 0.0, 0.0, 0.0, empty=True)
    return CostReport(
        samples=n,
        passes_per_sample=sum(e.passes for e in entries) / n,
        tokens_per_sample=sum(e.tokens for e in entries) / n,
        input_tokens_per_sample=sum(e.input_tokens for e in entries) / n,
        output_tokens_per_sample=sum(e.output_tokens for e in entries) / n,
        empty=False,
    )


def whitespace_tokenizer(text: str) -> list[str]:
    return text.split()


class _SentenceRun:
    def __init__(self, kind, document: Document, index: int, backend, tokenizer, config: RunConfig):
        self.kind = kind
        self.document = document
        self.sentence = document.sentence(index)
        self.backend = backend
        self.tokenizer = tokenizer
        self.config = config
        self.log = PassLog(self.sentence.key)
        self.warnings: list[str] = []

    def call(self, record: PromptRecord) -> str:
        self.log.passes += 1
        self.log.steps.append(record.step)
        self.log.input_tokens += len(self.tokenizer(record.prompt))
        out = self.backend.generate(record.prompt, self.config.max_output_tokens)
        self.log.output_tokens += len(self.tokenizer(out))
        return out

    def prompt(self, step: StepKind, ontology_text=None, contexts=None, focus=None) -> PromptRecord:
        return build_prompt(step, self.sentence, ontology_text, contexts, focus, self.config.ontology)

    def run(self) -> list[Event]:
        kind = self.kind
        if kind in (PipelineKind.THREE_STEP, PipelineKind.TWO_STEP):
            return self._multi_step(normalize_separately=kind is PipelineKind.THREE_STEP)
        if kind is PipelineKind.ONE_STEP_VANILLA:
            out = self.call(self.prompt(StepKind.ONE_STEP_VANILLA))
            parsed = parse_vanilla(StepKind.ONE_STEP_VANILLA, out, self.sentence.text, self.config.ontology)
            self.warnings += parsed.warnings
            return parsed.events
        out = self.call(self.prompt(StepKind.ONE_STEP_BLOCKS))
        parsed = parse_blocks(out, self.sentence.text, self.config.ontology)
        self.warnings += parsed.warnings
        if kind is PipelineKind.ONE_STEP_BLOCKS_CONTEXT:
            return self._renormalize(parsed.events)
        return parsed.events

    def _multi_step(self, normalize_separately: bool) -> list[Event]:
        text = self.sentence.text
        ontology = self.config.ontology
        out = self.call(self.prompt(StepKind.TRIGGER))
        parsed = parse_vanilla(StepKind.TRIGGER, out, text, ontology)
        self.warnings += parsed.warnings
        events = []
        for event in parsed.events:
            trigger = event.trigger
            out = self.call(self.prompt(StepKind.ANATOMY, focus=make_focus(text, trigger.text, trigger.span)))
            found = parse_vanilla(StepKind.ANATOMY, out, ontology=ontology, labels=not normalize_separately)
            self.warnings += found.warnings
            anatomies = self._align(found.anatomies, trigger.span)
            if normalize_separately:
                anatomies = [
                    replace(a, label=self._normalize(a, vanilla=True)) for a in anatomies
                ]
            events.append(Event(trigger, tuple(anatomies)))
        return events

    def _align(self, anatomies: Sequence[AnatomyEntity], anchor: Optional[Span]) -> list[AnatomyEntity]:
        claimed: list[Span] = []
        out = []
        for a in anatomies:
            span = align_term(self.sentence.text, a.text, anchor=anchor, exclude=claimed)
            if span is not None:
                claimed.append(span)
            out.append(replace(a, span=span))
        return out

    def _normalize(
        self, anatomy: AnatomyEntity, vanilla: bool, contexts: Optional[ContextBundle] = None
    ) -> Optional[AnatomyLabel]:
        focus = make_focus(self.sentence.text, anatomy.text, anatomy.span)
        if vanilla:
            out = self.call(self.prompt(StepKind.NORMALIZE, focus=focus))
            parsed = parse_vanilla(StepKind.NORMALIZE, out, ontology=self.config.ontology)
        else:
            joint = self.config.ontology.render("joint")
            out = self.call(self.prompt(StepKind.NORMALIZE, joint, contexts, focus))
            parsed = parse_classification_blocks(out, self.config.ontology)
        self.warnings += parsed.warnings
        labeled = [a for a in parsed.anatomies if a.label is not None]
        same = [a for a in labeled if a.text == anatomy.text]
        pick = (same or labeled or [None])[0]
        if pick is None:
            self.warnings.append(f"no label returned for anatomy {anatomy.text!r}")
            return None
        return pick.label

    def _renormalize(self, events: list[Event]) -> list[Event]:
        if not any(e.anatomies for e in events):
            return events
        bundle = gather(self.document, self.sentence.index, self.config.context, self.config.retriever)
        out = []
        for event in events:
            anatomies = []
            for anatomy in event.anatomies:
                label = self._normalize(anatomy, vanilla=False, contexts=bundle)
                # keep the first-pass label when the second pass gives nothing usable
                anatomies.append(replace(anatomy, label=label) if label is not None else anatomy)
            out.append(Event(event.trigger, tuple(anatomies)))
        return out


def _process(kind, document, index, backend, tokenizer, config):
    job = _SentenceRun(kind, document, index, backend, tokenizer, config)
    try:
        events = job.run()
    except Exception as exc:  # noqa: BLE001 - backend faults degrade per sentence
        log.warning("sentence %s failed: %s", job.sentence.key, exc)
        job.log.error = f"{type(exc).__name__}: {exc}"
        events = []
    if job.log.passes == 0:
        job.log.passes = 1
    return job.sentence.key, attach_spans(job.sentence.text, events), job.log, job.warnings


def run(
    kind: PipelineKind,
    corpus: Corpus,
    backend: ModelBackend,
    tokenizer: Tokenizer = whitespace_tokenizer,
    config: Optional[RunConfig] = None,
) -> RunResult:
    kind = PipelineKind(kind)
    config = config or RunConfig()
    if (
        kind is PipelineKind.ONE_STEP_BLOCKS_CONTEXT
        and config.context in (ContextKind.BM25, ContextKind.ALL)
        and config.retriever is None
    ):
        raise RetrieverMissing(f"context kind {config.context.value!r} needs a retrieval index")
    jobs = [(doc, i) for doc in corpus for i in range(len(doc))]

    def work(job):
        return _process(kind, job[0], job[1], backend, tokenizer, config)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    return RunResult(
        predictions={key: events for key, events, _, _ in results},
        logs={key: entry for key, _, entry, _ in results},
        warnings={key: w for key, _, _, w in results if w},
    )
