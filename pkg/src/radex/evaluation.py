"""Event-level precision/recall/F1 at four levels.

``trigger``: span overlap plus equal type. ``anatomy_span``: the anatomy's
trigger is matched and the spans overlap. ``anatomy_parent`` and
``anatomy_child``: the trigger is matched and the normalized category
agrees, spans ignored. Matches are one-to-one and counts are micro-summed
over the corpus.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .core import AnatomyEntity, Event, SentenceKey, overlaps

LEVELS = ("trigger", "anatomy_span", "anatomy_parent", "anatomy_child")


@dataclass(frozen=True)
class PRF:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision_defined(self) -> bool:
        return self.tp + self.fp > 0

    @property
    def recall_defined(self) -> bool:
        return self.tp + self.fn > 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.precision_defined else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.recall_defined else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "p": self.precision, "r": self.recall, "f1": self.f1}


def max_matching(
    n_pred: int, n_gold: int, compatible: Callable[[int, int], bool]
) -> dict[int, int]:
    """Maximum one-to-one matching, pred index -> gold index.

    A greedy left-to-right pass seeds the matching and augmenting paths then
    make it maximum; plain greedy can fall short when one prediction overlaps
    several golds.
    """
    adj = [[j for j in range(n_gold) if compatible(i, j)] for i in range(n_pred)]
    gold_of: dict[int, int] = {}
    pred_of: dict[int, int] = {}
    for i in range(n_pred):
        for j in adj[i]:
            if j not in pred_of:
                gold_of[i], pred_of[j] = j, i
                break

    def augment(i: int, seen: set[int]) -> bool:
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if j not in pred_of or augment(pred_of[j], seen):
                gold_of[i], pred_of[j] = j, i
                return True
        return False

    for i in range(n_pred):
        if i not in gold_of:
            augment(i, set())
    return gold_of


def _order(events: Sequence[Event]) -> list[int]:
    return sorted(
        range(len(events)),
        key=lambda i: (events[i].trigger.span is None,
                       events[i].trigger.span.start if events[i].trigger.span else 0, i),
    )


def match_triggers(gold: Sequence[Event], pred: Sequence[Event]) -> list[tuple[int, int]]:
    """One-to-one (gold index, pred index) trigger matches in sentence order."""
    g_order, p_order = _order(gold), _order(pred)

    def ok(pi: int, gi: int) -> bool:
        g, p = gold[g_order[gi]].trigger, pred[p_order[pi]].trigger
        return g.span is not None and p.span is not None and g.type == p.type and overlaps(g.span, p.span)

    pairs = max_matching(len(pred), len(gold), ok)
    return sorted((g_order[gi], p_order[pi]) for pi, gi in pairs.items())


def _anatomy_matches(gold: Sequence[AnatomyEntity], pred: Sequence[AnatomyEntity], level: str) -> dict[int, int]:
    if level == "anatomy_span":
        return max_matching(
            len(pred), len(gold),
            lambda i, j: pred[i].span is not None and gold[j].span is not None and overlaps(pred[i].span, gold[j].span),
        )
    if level == "anatomy_child":
        return max_matching(
            len(pred), len(gold),
            lambda i, j: pred[i].label is not None and pred[i].label == gold[j].label,
        )
    if level == "anatomy_parent":
        # exact categories first so child-level hits stay parent-level hits
        exact = _anatomy_matches(gold, pred, "anatomy_child")
        used = set(exact.values())
        rest_p = [i for i in range(len(pred)) if i not in exact and pred[i].label is not None]
        rest_g = [j for j in range(len(gold)) if j not in used and gold[j].label is not None]
        extra = max_matching(
            len(rest_p), len(rest_g),
            lambda a, b: pred[rest_p[a]].label.parent == gold[rest_g[b]].label.parent,
        )
        exact.update({rest_p[a]: rest_g[b] for a, b in extra.items()})
        return exact
    raise ValueError(f"unknown anatomy level {level!r}")


def matched_anatomies(gold: Sequence[Event], pred: Sequence[Event], level: str) -> set[tuple[int, int]]:
    """(pred event index, anatomy index) pairs counted as true positives."""
    hits = set()
    for gi, pi in match_triggers(gold, pred):
        for a in _anatomy_matches(gold[gi].anatomies, pred[pi].anatomies, level):
            hits.add((pi, a))
    return hits


def sentence_counts(gold: Sequence[Event], pred: Sequence[Event], level: str) -> PRF:
    if level == "trigger":
        tp = len(match_triggers(gold, pred))
        return PRF(tp, len(pred) - tp, len(gold) - tp)
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    tp = len(matched_anatomies(gold, pred, level))
    n_pred = sum(len(e.anatomies) for e in pred)
    n_gold = sum(len(e.anatomies) for e in gold)
    return PRF(tp, n_pred - tp, n_gold - tp)


def score(
    gold: Mapping[SentenceKey, Sequence[Event]],
    pred: Mapping[SentenceKey, Sequence[Event]],
    level: str,
) -> PRF:
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    total = PRF()
    for key in sorted(set(gold) | set(pred)):
        total += sentence_counts(gold.get(key, ()), pred.get(key, ()), level)
    return total


@dataclass
class EvalReport:
    levels: dict[str, PRF]
    per_document: dict[str, dict[str, PRF]]

    def macro_f1(self, level: str) -> float:
        docs = [d[level] for d in self.per_document.values() if d[level].recall_defined or d[level].precision_defined]
        return sum(d.f1 for d in docs) / len(docs) if docs else 0.0

    def to_json(self, config: Mapping | None = None) -> dict:
        return {
            "levels": {name: prf.to_json() for name, prf in self.levels.items()},
            "macro_f1": {name: self.macro_f1(name) for name in self.levels},
            "config": dict(config or {}),
        }


def evaluate(
    gold: Mapping[SentenceKey, Sequence[Event]],
    pred: Mapping[SentenceKey, Sequence[Event]],
    levels: Iterable[str] = LEVELS,
) -> EvalReport:
    levels = tuple(levels)
    unknown = [name for name in levels if name not in LEVELS]
    if unknown:
        raise ValueError(f"unknown levels {unknown}")
    totals = {name: PRF() for name in levels}
    per_doc: dict[str, dict[str, PRF]] = {}
    for key in sorted(set(gold) | set(pred)):
        g, p = gold.get(key, ()), pred.get(key, ())
        doc = per_doc.setdefault(key[0], {name: PRF() for name in levels})
        for name in levels:
            counts = sentence_counts(g, p, name)
            totals[name] += counts
            doc[name] += counts
    return EvalReport(totals, per_doc)
