"""Prompt rendering and the two output grammars (vanilla and subtask blocks).

Vanilla answers put each extracted span before its label in brackets::

    trigger: density [ Lesion ]
    anatomies: soft tissue [ Hepato-Biliary | Liver ], anterior abdominal wall [ Abdomen | Abdominal Wall ]

Block answers name each subtask with a state marker::

    state: trigger detection answer: density state: trigger classification answer: density [ Lesion ] ...

Entity texts must not contain ``,``, ``[``, ``]`` or ``|``; those are the
grammar's delimiters. Empty answers are written as ``none``. Parsers never
raise on model output: malformed fragments are skipped and reported in
``Parsed.warnings``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Iterator, Optional, Sequence

from .align import align_term, attach_spans, normalize, tokenize
from .core import AnatomyEntity, Corpus, Event, Sentence, SentenceKey, Span, Trigger
from .ontology import DEFAULT_ONTOLOGY, Ontology, OntologyError, TriggerType

if TYPE_CHECKING:
    from .context import ContextBundle

NONE = "none"
WINDOW_RADIUS = 3
MAX_INPUT_TOKENS = 768
MAX_INPUT_TOKENS_WITH_CONTEXT = 1536
MAX_OUTPUT_TOKENS = 512


class StepKind(str, Enum):
    TRIGGER = "trigger"
    ANATOMY = "anatomy"
    NORMALIZE = "normalize"
    ONE_STEP_VANILLA = "one_step_vanilla"
    ONE_STEP_BLOCKS = "one_step_blocks"
    AUX_TRIGGER_CLASSIFY = "aux_trigger_classify"
    AUX_ANATOMY_SPAN = "aux_anatomy_span"


_ONE_STEP_QUESTION = (
    "Question: What are medical findings in this sentence? What anatomy they occur in?  "
    "which anatomy category they belong to among listed options?"
)

QUESTIONS: dict[StepKind, str] = {
    StepKind.TRIGGER: "Question: What are medical findings in this sentence?",
    StepKind.ANATOMY: (
        'Consider the medical finding "{term}" in the span "{window}", '
        "Question: What anatomy it occurs in?  Where is it located?"
    ),
    StepKind.NORMALIZE: (
        'Consider the anatomy "{term}" in the span "{window}", '
        "which anatomy category it belongs to among listed options?"
    ),
    StepKind.ONE_STEP_VANILLA: _ONE_STEP_QUESTION,
    StepKind.ONE_STEP_BLOCKS: _ONE_STEP_QUESTION,
    StepKind.AUX_TRIGGER_CLASSIFY: (
        'Consider the medical finding "{term}", Question: What is the type of this medical finding?'
    ),
    StepKind.AUX_ANATOMY_SPAN: (
        'Consider the medical finding "{term}" in the span "{window}", '
        "Question: Please identify terms that describe the finding's anatomy locations."
    ),
}

DEFAULT_ONTOLOGY_KIND: dict[StepKind, str] = {
    StepKind.TRIGGER: "trigger",
    StepKind.ANATOMY: "anatomy",
    StepKind.NORMALIZE: "anatomy",
    StepKind.ONE_STEP_VANILLA: "joint",
    StepKind.ONE_STEP_BLOCKS: "joint",
    StepKind.AUX_TRIGGER_CLASSIFY: "joint",
    StepKind.AUX_ANATOMY_SPAN: "joint",
}

FOCUSED_STEPS = frozenset(
    {StepKind.ANATOMY, StepKind.NORMALIZE, StepKind.AUX_TRIGGER_CLASSIFY, StepKind.AUX_ANATOMY_SPAN}
)


class MissingFocus(ValueError):
    pass


class NoBlocksFound(ValueError):
    pass


@dataclass(frozen=True)
class Focus:
    term: str
    window: str


@dataclass(frozen=True)
class PromptRecord:
    step: StepKind
    key: SentenceKey
    prompt: str
    focus: Optional[Focus] = None
    contexts: Optional["ContextBundle"] = None
    max_input_tokens: int = MAX_INPUT_TOKENS
    max_output_tokens: int = MAX_OUTPUT_TOKENS


def focus_window(sentence: str, span: Span, radius: int = WINDOW_RADIUS) -> str:
    tokens = tokenize(sentence)
    hit = [i for i, t in enumerate(tokens) if t.start < span.end and span.start < t.end]
    if not hit:
        return sentence[span.start:span.end]
    lo = max(0, hit[0] - radius)
    hi = min(len(tokens), hit[-1] + radius + 1)
    return " ".join(sentence[t.start:t.end] for t in tokens[lo:hi])


def make_focus(sentence: str, term: str, span: Optional[Span]) -> Focus:
    """Focus for a queried term; unaligned terms use the term itself as window."""
    return Focus(term, focus_window(sentence, span) if span is not None else term)


def build_prompt(
    step: StepKind,
    sentence: Sentence,
    ontology_text: Optional[str] = None,
    contexts: Optional["ContextBundle"] = None,
    focus: Optional[Focus] = None,
    ontology: Ontology = DEFAULT_ONTOLOGY,
) -> PromptRecord:
    if step in FOCUSED_STEPS and focus is None:
        raise MissingFocus(f"{step.value} prompts need a focus term")
    if ontology_text is None:
        ontology_text = ontology.render(DEFAULT_ONTOLOGY_KIND[step])
    question = QUESTIONS[step]
    if focus is not None:
        question = question.format(term=focus.term, window=focus.window)
    prepended = list(contexts.prepended) if contexts else []
    appended = list(contexts.appended) if contexts else []
    parts = [*prepended, sentence.text, question, "structured knowledge:", *appended, ontology_text]
    has_context = bool(prepended or appended)
    return PromptRecord(
        step=step,
        key=sentence.key,
        prompt=" ".join(p for p in parts if p),
        focus=focus,
        contexts=contexts if has_context else None,
        max_input_tokens=MAX_INPUT_TOKENS_WITH_CONTEXT if has_context else MAX_INPUT_TOKENS,
    )


@dataclass(frozen=True)
class PromptParts:
    step: StepKind
    head: str
    focus: Optional[Focus]
    tail: str


def _question_regex(template: str) -> str:
    pattern = re.escape(template)
    pattern = pattern.replace(re.escape("{term}"), r'(?P<term>.*?)')
    return pattern.replace(re.escape("{window}"), r'(?P<window>.*?)')


# One-step goes before the trigger question it extends.
_PROMPT_PATTERNS = [
    (step, re.compile(rf"^(?P<head>.*?) {_question_regex(QUESTIONS[step])} structured knowledge: (?P<tail>.*)$", re.S))
    for step in (
        StepKind.ONE_STEP_VANILLA,
        StepKind.TRIGGER,
        StepKind.ANATOMY,
        StepKind.NORMALIZE,
        StepKind.AUX_TRIGGER_CLASSIFY,
        StepKind.AUX_ANATOMY_SPAN,
    )
]


def parse_prompt(prompt: str) -> Optional[PromptParts]:
    """Invert :func:`build_prompt` far enough to recover step and focus.

    One-step prompts come back as ``ONE_STEP_VANILLA``; the vanilla and block
    variants share a question. ``head`` is the prepended contexts followed by
    the input sentence.
    """
    for step, pattern in _PROMPT_PATTERNS:
        m = pattern.match(prompt)
        if m is None:
            continue
        groups = m.groupdict()
        focus = None
        if "term" in groups:
            focus = Focus(groups["term"], groups.get("window") or groups["term"])
        return PromptParts(step, groups["head"], focus, groups["tail"])
    return None


# ---------------------------------------------------------------- emission

def _fmt_trigger(trigger: Trigger) -> str:
    return f"{trigger.text} [ {trigger.type} ]"


def _fmt_anatomy(anatomy: AnatomyEntity) -> str:
    if anatomy.label is None:
        return anatomy.text
    return f"{anatomy.text} [ {anatomy.label} ]"


def _join(items: Iterable[str]) -> str:
    return ", ".join(items) or NONE


def emit_vanilla(step: StepKind, events: Sequence[Event]) -> str:
    if step is StepKind.TRIGGER:
        if not events:
            return NONE
        return "trigger: " + _join(_fmt_trigger(e.trigger) for e in events)
    if step in (StepKind.ANATOMY, StepKind.NORMALIZE):
        anatomies = [a for e in events for a in e.anatomies]
        if not anatomies:
            return NONE
        return "anatomies: " + _join(_fmt_anatomy(a) for a in anatomies)
    if step in (StepKind.ONE_STEP_VANILLA, StepKind.ONE_STEP_BLOCKS):
        if not events:
            return NONE
        return " ".join(
            f"trigger: {_fmt_trigger(e.trigger)} anatomies: {_join(_fmt_anatomy(a) for a in e.anatomies)}"
            for e in events
        )
    raise ValueError(f"no vanilla grammar for {step.value}")


def _block(state: str, answer: str) -> str:
    return f"state: {state} answer: {answer}"


def block_trigger_detection(events: Sequence[Event]) -> str:
    return _block("trigger detection", _join(e.trigger.text for e in events))


def block_trigger_classification(events: Sequence[Event]) -> str:
    if not events:
        return _block("trigger classification", NONE)
    return " ".join(_block("trigger classification", _fmt_trigger(e.trigger)) for e in events)


def block_span_detection(event: Optional[Event]) -> str:
    anatomies = event.anatomies if event is not None else ()
    return _block("span detection", _join(a.text for a in anatomies))


def block_classification(anatomies: Sequence[AnatomyEntity]) -> str:
    if not anatomies:
        return _block("classification", NONE)
    return " ".join(_block("classification", _fmt_anatomy(a)) for a in anatomies)


def emit_blocks(events: Sequence[Event]) -> str:
    blocks = [block_trigger_detection(events)]
    blocks += [_block("trigger classification", _fmt_trigger(e.trigger)) for e in events]
    blocks += [block_span_detection(e) for e in events]
    blocks += [_block("classification", _fmt_anatomy(a)) for e in events for a in e.anatomies]
    return " ".join(blocks)


def target_text(step: StepKind, events: Sequence[Event], fmt: str) -> str:
    """Reference answer for ``step`` given the (already focused) gold events.

    For focused steps ``events`` holds only the queried trigger's event, and
    for normalization only the queried anatomy.
    """
    if fmt not in ("vanilla", "blocks"):
        raise ValueError(f"unknown output format {fmt!r}")
    if step is StepKind.ONE_STEP_VANILLA or step is StepKind.ONE_STEP_BLOCKS:
        return emit_blocks(events) if fmt == "blocks" else emit_vanilla(StepKind.ONE_STEP_VANILLA, events)
    if fmt == "vanilla" and step in (StepKind.TRIGGER, StepKind.ANATOMY, StepKind.NORMALIZE):
        return emit_vanilla(step, events)
    anatomies = [a for e in events for a in e.anatomies]
    if step is StepKind.TRIGGER:
        return block_trigger_detection(events)
    if step is StepKind.AUX_TRIGGER_CLASSIFY:
        return block_trigger_classification(events)
    if step is StepKind.AUX_ANATOMY_SPAN:
        return block_span_detection(events[0] if events else None)
    if step is StepKind.ANATOMY:
        if not anatomies:
            return block_span_detection(None)
        return block_span_detection(events[0]) + " " + block_classification(anatomies)
    if step is StepKind.NORMALIZE:
        return block_classification(anatomies)
    raise ValueError(f"no target grammar for {step.value}")


# ----------------------------------------------------------------- parsing

@dataclass
class Parsed:
    events: list[Event] = field(default_factory=list)
    anatomies: list[AnatomyEntity] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


_ITEM = re.compile(r"([^\[\]]*)\[([^\[\]]*)\]")


def _is_empty(text: str) -> bool:
    return normalize(text) in ("", NONE)


def _split_items(payload: str, warnings: list[str]) -> list[tuple[str, Optional[str]]]:
    """Split ``a [ x ], b [ y ], c`` into (text, label-or-None) pairs."""
    items: list[tuple[str, Optional[str]]] = []
    pos = 0

    def loose(chunk: str) -> list[str]:
        return [p.strip() for p in chunk.split(",") if p.strip()]

    for m in _ITEM.finditer(payload):
        pieces = m.group(1).split(",")
        for stray in loose(",".join(pieces[:-1])):
            items.append((stray, None))
        items.append((pieces[-1].strip(), m.group(2).strip()))
        pos = m.end()
    for stray in loose(payload[pos:]):
        if "[" in stray or "]" in stray:
            warnings.append(f"unbalanced brackets in {stray!r}")
            stray = stray.replace("[", " ").replace("]", " ").strip()
            if not stray:
                continue
        items.append((stray, None))
    return items


def _triggers_from(payload: str, ontology: Ontology, warnings: list[str]) -> list[Trigger]:
    if _is_empty(payload):
        return []
    triggers = []
    for text, label in _split_items(payload, warnings):
        if not text:
            warnings.append(f"empty trigger text with label {label!r}")
        elif label is None:
            warnings.append(f"trigger {text!r} has no type")
        else:
            try:
                triggers.append(Trigger(text, ontology.parse_trigger_type(label)))
            except OntologyError as exc:
                warnings.append(f"trigger {text!r}: {exc}")
    return triggers


def _anatomies_from(
    payload: str, ontology: Ontology, warnings: list[str], labels: bool = True
) -> list[AnatomyEntity]:
    if _is_empty(payload):
        return []
    anatomies = []
    for text, label in _split_items(payload, warnings):
        if not text:
            warnings.append(f"empty anatomy text with label {label!r}")
        elif not labels:
            anatomies.append(AnatomyEntity(text))
        elif label is None:
            warnings.append(f"anatomy {text!r} has no label")
        else:
            try:
                anatomies.append(AnatomyEntity(text, ontology.parse_label(label)))
            except OntologyError as exc:
                warnings.append(f"anatomy {text!r}: UnparseableLabel: {exc}")
    return anatomies


_SECTION = re.compile(r"\b(trigger|anatomies)\s*:", re.I)


def _sections(text: str) -> tuple[str, list[tuple[str, str]]]:
    marks = list(_SECTION.finditer(text))
    lead = text[: marks[0].start()] if marks else text
    out = []
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(text)
        out.append((m.group(1).lower(), text[m.end():end].strip()))
    return lead.strip(), out


def parse_vanilla(
    step: StepKind,
    text: str,
    sentence: Optional[str | Sentence] = None,
    ontology: Ontology = DEFAULT_ONTOLOGY,
    labels: bool = True,
) -> Parsed:
    """Parse a vanilla answer.

    Trigger and one-step answers fill ``events``; anatomy and normalization
    answers fill ``anatomies``. With ``labels=False`` anatomy labels are
    ignored (the three-step pipeline keeps only spans from its second step).
    Spans are attached when ``sentence`` is given.
    """
    out = Parsed()
    if _is_empty(text):
        return out
    lead, sections = _sections(text)
    if lead and not _is_empty(lead):
        out.warnings.append(f"text outside any section: {lead!r}")

    if step is StepKind.TRIGGER:
        for name, payload in sections:
            if name != "trigger":
                out.warnings.append(f"unexpected {name!r} section in trigger answer")
                continue
            out.events += [Event(t) for t in _triggers_from(payload, ontology, out.warnings)]
    elif step in (StepKind.ANATOMY, StepKind.NORMALIZE):
        for name, payload in sections:
            if name != "anatomies":
                out.warnings.append(f"unexpected {name!r} section in anatomy answer")
                continue
            out.anatomies += _anatomies_from(payload, ontology, out.warnings, labels)
    elif step in (StepKind.ONE_STEP_VANILLA, StepKind.ONE_STEP_BLOCKS):
        pending: list[Trigger] = []
        groups: list[tuple[Trigger, list[AnatomyEntity]]] = []
        for name, payload in sections:
            if name == "trigger":
                pending = _triggers_from(payload, ontology, out.warnings)
                groups += [(t, []) for t in pending]
            elif not pending:
                out.warnings.append("anatomies section without a preceding trigger")
            else:
                if len(pending) > 1:
                    out.warnings.append("several triggers share one anatomies section; attached to the last")
                groups[-1][1].extend(_anatomies_from(payload, ontology, out.warnings, labels))
                pending = []
        out.events = [Event(t, tuple(a)) for t, a in groups]
    else:
        raise ValueError(f"no vanilla grammar for {step.value}")

    if not sections:
        out.warnings.append("no 'trigger:' or 'anatomies:' section found")
    if sentence is not None:
        _attach(out, sentence)
    return out


def _attach(parsed: Parsed, sentence: str | Sentence) -> None:
    text = sentence.text if isinstance(sentence, Sentence) else sentence
    parsed.events = attach_spans(text, parsed.events)
    claimed: list[Span] = []
    attached = []
    for a in parsed.anatomies:
        if a.span is None:
            span = align_term(text, a.text, exclude=claimed)
            if span is not None:
                claimed.append(span)
                a = AnatomyEntity(a.text, a.label, span)
        attached.append(a)
    parsed.anatomies = attached


_BLOCK = re.compile(r"state\s*:\s*(?P<state>.*?)\s*answer\s*:\s*(?P<answer>.*?)\s*(?=state\s*:|\Z)", re.S | re.I)


def iter_blocks(text: str) -> Iterator[tuple[str, str]]:
    for m in _BLOCK.finditer(text):
        yield " ".join(m.group("state").lower().split()), m.group("answer").strip()


@dataclass
class _Slot:
    text: str
    type: Optional[TriggerType] = None
    anatomies: list[AnatomyEntity] = field(default_factory=list)


def parse_blocks(
    text: str,
    sentence: Optional[str | Sentence] = None,
    ontology: Ontology = DEFAULT_ONTOLOGY,
    strict: bool = False,
) -> Parsed:
    """Parse a subtask-block answer by walking its state markers.

    Later blocks join earlier ones by exact answer text, left to right; the
    k-th span detection block belongs to the k-th classified trigger. Output
    with no blocks yields nothing plus a ``NoBlocksFound`` warning (raised
    instead when ``strict``).
    """
    out = Parsed()
    blocks = list(iter_blocks(text))
    if not blocks:
        if strict:
            raise NoBlocksFound(f"no state blocks in {text[:80]!r}")
        if not _is_empty(text):
            out.warnings.append("NoBlocksFound: no 'state: ... answer: ...' blocks")
        return out

    slots: list[_Slot] = []
    classified: list[_Slot] = []
    spans_seen = 0
    for state, answer in blocks:
        if state == "trigger detection":
            if not _is_empty(answer):
                slots += [_Slot(t.strip()) for t in answer.split(",") if t.strip()]
        elif state == "trigger classification":
            for trigger in _triggers_from(answer, ontology, out.warnings):
                slot = next((s for s in slots if s.text == trigger.text and s.type is None), None)
                if slot is None:
                    out.warnings.append(f"classified trigger {trigger.text!r} was not detected")
                    slot = _Slot(trigger.text)
                    slots.append(slot)
                slot.type = trigger.type
                classified.append(slot)
        elif state == "span detection":
            if spans_seen >= len(classified):
                out.warnings.append("span detection block without a matching trigger")
            elif not _is_empty(answer):
                classified[spans_seen].anatomies += [
                    AnatomyEntity(t.strip()) for t in answer.split(",") if t.strip()
                ]
            spans_seen += 1
        elif state == "classification":
            for item in _anatomies_from(answer, ontology, out.warnings):
                target = next(
                    ((s, i) for s in classified for i, a in enumerate(s.anatomies)
                     if a.text == item.text and a.label is None),
                    None,
                )
                if target is None:
                    out.warnings.append(f"classified anatomy {item.text!r} was not detected")
                    continue
                slot, i = target
                slot.anatomies[i] = AnatomyEntity(item.text, item.label)
        else:
            out.warnings.append(f"unknown state {state!r}")

    for slot in slots:
        if slot.type is None:
            out.warnings.append(f"trigger {slot.text!r} was never classified")
            continue
        out.events.append(Event(Trigger(slot.text, slot.type), tuple(slot.anatomies)))
    if sentence is not None:
        _attach(out, sentence)
    return out


def parse_classification_blocks(text: str, ontology: Ontology = DEFAULT_ONTOLOGY) -> Parsed:
    """Labels from ``classification`` blocks only (normalization answers)."""
    out = Parsed()
    for state, answer in iter_blocks(text):
        if state == "classification":
            out.anatomies += _anatomies_from(answer, ontology, out.warnings)
        else:
            out.warnings.append(f"unexpected state {state!r} in normalization answer")
    return out


# ---------------------------------------------------------- training pairs

@dataclass(frozen=True)
class TrainingRecord:
    prompt: str
    target: str
    task: str
    doc_id: str
    sent: int

    def to_json(self) -> dict:
        return {"prompt": self.prompt, "target": self.target, "task": self.task,
                "doc_id": self.doc_id, "sent": self.sent}


def emit_training_pairs(
    corpus: Corpus,
    gold: dict[SentenceKey, Sequence[Event]],
    fmt: str = "blocks",
    include_aux: bool = False,
    include_anatomy_span: bool = False,
    ontology: Ontology = DEFAULT_ONTOLOGY,
) -> list[TrainingRecord]:
    """One-step records per sentence, plus block-format auxiliary subtasks.

    Contexts are never added here; they are an inference-time device only.
    """
    if fmt not in ("vanilla", "blocks"):
        raise ValueError(f"unknown output format {fmt!r}")
    one_step = StepKind.ONE_STEP_BLOCKS if fmt == "blocks" else StepKind.ONE_STEP_VANILLA
    joint = ontology.render("joint")
    records = []
    for sentence in corpus.iter_sentences():
        events = attach_spans(sentence.text, gold.get(sentence.key, ()))

        def add(step: StepKind, task: str, focused: Sequence[Event], focus: Optional[Focus] = None):
            prompt = build_prompt(step, sentence, joint, focus=focus, ontology=ontology)
            target = target_text(step, focused, "blocks" if step is not one_step else fmt)
            records.append(TrainingRecord(prompt.prompt, target, task, sentence.doc_id, sentence.index))

        add(one_step, "one_step", events)
        if not include_aux:
            continue
        add(StepKind.TRIGGER, "aux_trigger_detection", events)
        for event in events:
            trig = event.trigger
            add(StepKind.AUX_TRIGGER_CLASSIFY, "aux_trigger_classification", [event], Focus(trig.text, trig.text))
            trig_focus = make_focus(sentence.text, trig.text, trig.span)
            add(StepKind.ANATOMY, "aux_anatomy_joint", [event], trig_focus)
            if include_anatomy_span:
                add(StepKind.AUX_ANATOMY_SPAN, "aux_anatomy_span", [event], trig_focus)
            for anatomy in event.anatomies:
                add(
                    StepKind.NORMALIZE,
                    "aux_anatomy_normalization",
                    [Event(trig, (anatomy,))],
                    make_focus(sentence.text, anatomy.text, anatomy.span),
                )
    return records
