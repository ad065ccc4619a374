"""Text-to-text backends: deterministic gold replay, seeded noise, and HTTP."""
from __future__ import annotations

import logging
import os
import random
import time
from dataclasses import dataclass, replace
from typing import Optional, Protocol, Sequence

import httpx

from .align import attach_spans
from .core import Corpus, Event, SentenceKey
from .ontology import DEFAULT_ONTOLOGY, Ontology, TriggerType
from .textio import StepKind, make_focus, parse_prompt, target_text

log = logging.getLogger(__name__)

TOKEN_ENV = "RADEX_BACKEND_TOKEN"


class ModelBackend(Protocol):
    def generate(self, prompt: str, max_tokens: int) -> str: ...


class BackendError(RuntimeError):
    pass


class UnknownPrompt(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class RetriesExhausted(BackendError):
    pass


@dataclass(frozen=True)
class Resolved:
    """What a prompt asks about: the sentence, the step, and the gold events
    in focus as ``(event index, event, anatomy indices)`` triples."""

    step: StepKind
    key: SentenceKey
    items: tuple[tuple[int, Event, tuple[int, ...]], ...]

    def events(self) -> list[Event]:
        return [Event(e.trigger, tuple(e.anatomies[i] for i in idx)) for _, e, idx in self.items]


class GoldReplayBackend:
    """Answers every prompt with the reference target for its step.

    The prompt text is parsed back into (sentence, step, focus); the sentence
    is found by matching the end of the text before the question against the
    corpus. ``fmt`` selects the vanilla or block answer grammar.
    """

    def __init__(self, corpus: Corpus, gold: dict[SentenceKey, Sequence[Event]], fmt: str = "vanilla"):
        if fmt not in ("vanilla", "blocks"):
            raise ValueError(f"unknown output format {fmt!r}")
        self.fmt = fmt
        self.corpus = corpus
        self.gold: dict[SentenceKey, list[Event]] = {}
        self._by_text: dict[str, list[SentenceKey]] = {}
        for sentence in corpus.iter_sentences():
            self._by_text.setdefault(sentence.text, []).append(sentence.key)
            self.gold[sentence.key] = attach_spans(sentence.text, gold.get(sentence.key, ()))

    def _find_sentence(self, head: str) -> SentenceKey:
        best: Optional[str] = None
        for text in self._by_text:
            if (head == text or head.endswith(" " + text)) and (best is None or len(text) > len(best)):
                best = text
        if best is None:
            raise UnknownPrompt(f"no corpus sentence ends the prompt head {head[-60:]!r}")
        keys = self._by_text[best]
        first = [e.without_spans() for e in self.gold[keys[0]]]
        if any([e.without_spans() for e in self.gold[k]] != first for k in keys[1:]):
            raise UnknownPrompt(f"sentence {best[:60]!r} occurs with conflicting annotations")
        return keys[0]

    def resolve(self, prompt: str) -> Resolved:
        parts = parse_prompt(prompt)
        if parts is None:
            raise UnknownPrompt(f"unrecognized prompt {prompt[:80]!r}")
        key = self._find_sentence(parts.head)
        text = self.corpus.sentence(key).text
        events = self.gold[key]
        step, focus = parts.step, parts.focus
        if focus is None:
            return Resolved(step, key, tuple((i, e, tuple(range(len(e.anatomies)))) for i, e in enumerate(events)))

        if step is StepKind.NORMALIZE:
            hits = [
                (i, e, (j,))
                for i, e in enumerate(events)
                for j, a in enumerate(e.anatomies)
                if a.text == focus.term
            ]
            exact = [
                h for h in hits
                if make_focus(text, focus.term, h[1].anatomies[h[2][0]].span).window == focus.window
            ]
        else:
            hits = [(i, e, tuple(range(len(e.anatomies)))) for i, e in enumerate(events) if e.trigger.text == focus.term]
            exact = [h for h in hits if make_focus(text, focus.term, h[1].trigger.span).window == focus.window]
        chosen = exact or hits
        if not chosen:
            raise UnknownPrompt(f"{focus.term!r} is not a gold entity of sentence {key}")
        return Resolved(step, key, (chosen[0],))

    def render(self, resolved: Resolved, events: Sequence[Event]) -> str:
        return target_text(resolved.step, events, self.fmt)

    def generate(self, prompt: str, max_tokens: int = 512) -> str:
        resolved = self.resolve(prompt)
        return self.render(resolved, resolved.events())


class NoisyReplayBackend:
    """Gold replay that drops entities and flips labels with seeded coin flips.

    Each decision is keyed on (seed, sentence, entity position), so an entity
    dropped in one pass stays dropped in every later pass over the sentence.
    """

    def __init__(
        self,
        gold: GoldReplayBackend,
        seed: int = 0,
        drop_prob: float = 0.0,
        flip_prob: float = 0.0,
        ontology: Ontology = DEFAULT_ONTOLOGY,
    ):
        for name, p in (("drop_prob", drop_prob), ("flip_prob", flip_prob)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        self.gold = gold
        self.seed = seed
        self.drop_prob = drop_prob
        self.flip_prob = flip_prob
        self._labels = list(ontology.labels())

    def _rng(self, key: SentenceKey, *where: object) -> random.Random:
        return random.Random("|".join(map(str, (self.seed, key[0], key[1], *where))))

    def _perturb(self, key: SentenceKey, ti: int, event: Event, anatomy_idx: Sequence[int]) -> Optional[Event]:
        if self._rng(key, ti, "drop").random() < self.drop_prob:
            return None
        trigger = event.trigger
        rng = self._rng(key, ti, "flip")
        if rng.random() < self.flip_prob:
            trigger = replace(trigger, type=rng.choice([t for t in TriggerType if t is not trigger.type]))
        anatomies = []
        for ai in anatomy_idx:
            anatomy = event.anatomies[ai]
            if self._rng(key, ti, ai, "drop").random() < self.drop_prob:
                continue
            rng = self._rng(key, ti, ai, "flip")
            if anatomy.label is not None and rng.random() < self.flip_prob:
                anatomy = replace(anatomy, label=rng.choice([l for l in self._labels if l != anatomy.label]))
            anatomies.append(anatomy)
        return Event(trigger, tuple(anatomies))

    def generate(self, prompt: str, max_tokens: int = 512) -> str:
        resolved = self.gold.resolve(prompt)
        events = []
        for ti, event, idx in resolved.items:
            noisy = self._perturb(resolved.key, ti, event, idx)
            if noisy is not None and (noisy.anatomies or resolved.step is not StepKind.NORMALIZE):
                events.append(noisy)
        return self.gold.render(resolved, events)


class RemoteBackend:
    """POSTs ``{"prompt", "max_tokens"}`` as JSON and reads ``{"text"}`` back.

    Connection errors, timeouts, 429 and 5xx responses are retried with
    exponential backoff; ``retries`` counts attempts after the first.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.5,
        token: Optional[str] = None,
        transport: Optional[httpx.BaseTransport] = None,
        sleep=time.sleep,
    ):
        if retries < 0:
            raise ValueError("retries must be non-negative")
        self.endpoint = endpoint
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def generate(self, prompt: str, max_tokens: int = 512) -> str:
        last: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.endpoint, json={"prompt": prompt, "max_tokens": max_tokens})
            except httpx.TimeoutException as exc:
                last = BackendTimeout(f"request timed out: {exc}")
                continue
            except httpx.TransportError as exc:
                last = BackendError(f"transport failure: {exc}")
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = BackendError(f"transient HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"response is not JSON: {resp.text[:200]!r}") from exc
            if not isinstance(body, dict) or not isinstance(body.get("text"), str):
                raise MalformedResponse(f"response lacks a string 'text' field: {str(body)[:200]}")
            return body["text"]
        if self.retries == 0 and last is not None:
            raise last
        raise RetriesExhausted(f"gave up after {self.retries + 1} attempts: {last}") from last
