"""JSON Lines corpus and annotation files, written atomically."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .core import AnatomyEntity, Corpus, Document, Event, SentenceKey, Span, Trigger, validate_event
from .ontology import DEFAULT_ONTOLOGY, Ontology, OntologyError


class SchemaError(ValueError):
    pass


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: str | Path, rows: Iterable[Mapping[str, Any]]) -> None:
    atomic_write(path, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows))


def write_json(path: str | Path, obj: Any) -> None:
    atomic_write(path, json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[tuple[int, dict]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{n}: invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict):
                raise SchemaError(f"{path}:{n}: expected a JSON object")
            rows.append((n, row))
    return rows


def read_lines(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def load_corpus(path: str | Path) -> Corpus:
    docs = []
    seen = set()
    for n, row in read_jsonl(path):
        doc_id, sentences = row.get("id"), row.get("sentences")
        if not isinstance(doc_id, str) or not doc_id:
            raise SchemaError(f"{path}:{n}: 'id' must be a non-empty string")
        if doc_id in seen:
            raise SchemaError(f"{path}:{n}: duplicate document id {doc_id!r}")
        if not isinstance(sentences, list) or not all(isinstance(s, str) and s for s in sentences):
            raise SchemaError(f"{path}:{n}: 'sentences' must be a list of non-empty strings")
        exam_type = row.get("exam_type", "")
        if not isinstance(exam_type, str):
            raise SchemaError(f"{path}:{n}: 'exam_type' must be a string")
        seen.add(doc_id)
        docs.append(Document(doc_id, tuple(sentences), exam_type))
    return Corpus(docs)


def dump_corpus(corpus: Corpus, path: str | Path) -> None:
    write_jsonl(path, ({"id": d.id, "exam_type": d.exam_type, "sentences": list(d.sentences)} for d in corpus))


def _span(obj: dict, where: str) -> Optional[Span]:
    start, end = obj.get("start"), obj.get("end")
    if start is None and end is None:
        return None
    if not isinstance(start, int) or not isinstance(end, int):
        raise SchemaError(f"{where}: 'start'/'end' must be integers or both null")
    try:
        return Span(start, end)
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def _event(obj: Any, ontology: Ontology, where: str) -> Event:
    if not isinstance(obj, dict) or not isinstance(obj.get("trigger"), dict):
        raise SchemaError(f"{where}: event needs a 'trigger' object")
    t = obj["trigger"]
    if not isinstance(t.get("text"), str) or not isinstance(t.get("type"), str):
        raise SchemaError(f"{where}: trigger needs string 'text' and 'type'")
    try:
        trigger = Trigger(t["text"], ontology.parse_trigger_type(t["type"]), _span(t, where))
    except OntologyError as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    anatomies = []
    for a in obj.get("anatomies", []):
        if not isinstance(a, dict) or not isinstance(a.get("text"), str):
            raise SchemaError(f"{where}: anatomy needs a string 'text'")
        label = None
        if a.get("parent") is not None or a.get("child") is not None:
            try:
                label = ontology.parse_label(f"{a.get('parent')} | {a.get('child')}")
            except OntologyError as exc:
                raise SchemaError(f"{where}: {exc}") from exc
        anatomies.append(AnatomyEntity(a["text"], label, _span(a, where)))
    return Event(trigger, tuple(anatomies))


def load_annotations(
    path: str | Path,
    corpus: Optional[Corpus] = None,
    ontology: Ontology = DEFAULT_ONTOLOGY,
) -> dict[SentenceKey, list[Event]]:
    """Read an annotation (or prediction) file, validating against ``corpus``."""
    out: dict[SentenceKey, list[Event]] = {}
    for n, row in read_jsonl(path):
        where = f"{path}:{n}"
        doc_id, sent = row.get("doc_id"), row.get("sent")
        if not isinstance(doc_id, str) or not isinstance(sent, int) or isinstance(sent, bool):
            raise SchemaError(f"{where}: needs string 'doc_id' and integer 'sent'")
        key = (doc_id, sent)
        if key in out:
            raise SchemaError(f"{where}: duplicate row for {key}")
        if not isinstance(row.get("events", []), list):
            raise SchemaError(f"{where}: 'events' must be a list")
        events = [_event(e, ontology, where) for e in row.get("events", [])]
        if corpus is not None:
            if key not in corpus:
                raise SchemaError(f"{where}: sentence {key} is not in the corpus")
            text = corpus.sentence(key).text
            for event in events:
                problems = validate_event(text, event)
                if problems:
                    raise SchemaError(f"{where}: {problems[0].kind.value}: {problems[0].detail}")
        out[key] = events
    return out


def _span_json(span: Optional[Span]) -> dict:
    return {"start": span.start, "end": span.end} if span else {"start": None, "end": None}


def event_to_json(event: Event) -> dict:
    t = event.trigger
    return {
        "trigger": {"text": t.text, **_span_json(t.span), "type": t.type.value},
        "anatomies": [
            {
                "text": a.text,
                **_span_json(a.span),
                "parent": a.label.parent if a.label else None,
                "child": a.label.child if a.label else None,
            }
            for a in event.anatomies
        ],
    }


def annotation_rows(
    annotations: Mapping[SentenceKey, Sequence[Event]], corpus: Optional[Corpus] = None
) -> list[dict]:
    keys = [s.key for s in corpus.iter_sentences()] if corpus is not None else sorted(annotations)
    return [
        {"doc_id": k[0], "sent": k[1], "events": [event_to_json(e) for e in annotations.get(k, ())]}
        for k in keys
    ]


def dump_annotations(
    annotations: Mapping[SentenceKey, Sequence[Event]], path: str | Path, corpus: Optional[Corpus] = None
) -> None:
    """One row per sentence of ``corpus`` (or per annotated key without one)."""
    write_jsonl(path, annotation_rows(annotations, corpus))
