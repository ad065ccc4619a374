"""Seeded synthetic radiology-style corpora with gold events.

Used for replay tests, demos and cost-model checks. Every generated entity
text is checked to align back to its own span, so gold replay through the
full prompt -> parse -> align loop can reproduce the annotations exactly.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from .align import attach_spans
from .core import AnatomyEntity, Corpus, Document, Event, SentenceKey, Span, Trigger
from .ontology import AnatomyLabel, TriggerType

L = TriggerType.LESION
M = TriggerType.MEDICAL_PROBLEM
I = TriggerType.INDICATION

TRIGGERS: tuple[tuple[str, TriggerType], ...] = (
    ("nodule", L), ("mass", L), ("lesion", L), ("density", L), ("cyst", L),
    ("opacity", L), ("tumor", L), ("metastasis", L), ("hypodensity", L),
    ("fracture", M), ("hernia", M), ("effusion", M), ("atelectasis", M),
    ("edema", M), ("stenosis", M), ("thickening", M), ("calcification", M),
    ("pain", I), ("cancer staging", I), ("trauma", I), ("restaging", I),
)

ANATOMIES: tuple[tuple[str, str, str], ...] = (
    ("left lobe of the liver", "Hepato-Biliary", "Liver"),
    ("right hepatic lobe", "Hepato-Biliary", "Liver"),
    ("pancreatic head", "Hepato-Biliary", "Pancreas"),
    ("gallbladder", "Hepato-Biliary", "Gallblader"),
    ("common bile duct", "Hepato-Biliary", "Bile Duct"),
    ("anterior abdominal wall", "Abdomen", "Abdominal Wall"),
    ("spleen", "Abdomen", "Spleen"),
    ("left adrenal gland", "Abdomen", "Adrenal Gland"),
    ("retroperitoneum", "Abdomen", "Retroperitoneal"),
    ("right lower lobe", "Respiratory", "Lung"),
    ("lingula", "Respiratory", "Lung"),
    ("pleural space", "Respiratory", "Pleural Membrane"),
    ("left main bronchus", "Respiratory", "Tracheobronchial"),
    ("mediastinum", "Thoracic", "Mediastinal"),
    ("cervical spine", "Neurological", "Spine Cervical"),
    ("L4 vertebral body", "Neurological", "Spine Lumbar"),
    ("frontal lobe", "Neurological", "Brain"),
    ("pituitary", "Neurological", "Pituitary"),
    ("left kidney", "Urinary", "Kidney"),
    ("urinary bladder", "Urinary", "Urinary Bladder"),
    ("thyroid", "Head Neck", "Thyroid"),
    ("oropharynx", "Head Neck", "Pharynx"),
    ("maxillary sinus", "Head Neck", "Nasal Sinus"),
    ("right breast", "F Reproductive Obstetric", "Breast"),
    ("uterus", "F Reproductive Obstetric", "Uterus"),
    ("prostate", "M Reproductive", "Prostate"),
    ("femoral neck", "Musculo-Skeletal", "Bone and or Joint"),
    ("iliopsoas muscle", "Musculo-Skeletal", "Skeletal and or Smooth Muscle"),
    ("pelvis", "Body Regions", "Pelvis"),
    ("left thigh", "Body Regions", "Lower Limb"),
    ("subcutaneous fat", "Skin", "Subcutaneous"),
    ("sigmoid colon", "Digestive", "Large Intestine"),
    ("gastric antrum", "Digestive", "Stomach"),
    ("distal esophagus", "Digestive", "Esophagus"),
    ("pericardium", "Cardiovascular", "Pericardial Sac"),
    ("ascending aorta", "Cardiovascular", "Arterial"),
    ("axillary nodes", "Lymphatic", "Undetermined"),
    ("soft tissue", "Miscellaneous", "Connective Tissue"),
)

EXAM_TYPES = ("PET CT SKULL THIGH", "CT CHEST ABDOMEN PELVIS", "MRI BRAIN", "MRI LUMBAR SPINE", "PET CT WHOLE BODY")

_QUIET = (
    "No acute abnormality is identified",
    "The study is otherwise unremarkable",
    "No new findings since the prior exam",
    "Comparison is made with the prior study",
    "Technique was standard for this protocol",
)
_HEADERS = ("FINDINGS:", "IMPRESSION:", "CHEST: stable appearance", "ABDOMEN: see below", "HISTORY: as noted")
_VERBS = ("involving", "within", "along", "adjacent to", "projecting into")
_MODIFIERS = ("hypermetabolic", "ill-defined", "small", "stable", "new", "enlarging")


class _Builder:
    def __init__(self):
        self.parts: list[str] = []
        self.length = 0

    def add(self, text: str) -> Span:
        if self.parts:
            self.parts.append(" ")
            self.length += 1
        start = self.length
        self.parts.append(text)
        self.length += len(text)
        return Span(start, self.length)

    def text(self) -> str:
        return "".join(self.parts)


@dataclass
class SyntheticShape:
    """Target distribution of entities per sentence."""

    trigger_rate: float = 0.7
    anatomy_rate: float = 0.8
    two_trigger_rate: float = 0.0
    max_anatomies: int = 3


def _finding_sentence(rng: random.Random, triggers, anatomy_counts) -> tuple[str, list[Event]]:
    b = _Builder()
    b.add(rng.choice(("There is a", "Redemonstrated", "Again seen is a", "Note is made of a")))
    b.add(f"{rng.randint(2, 40)} mm")
    pool = list(ANATOMIES)
    rng.shuffle(pool)
    events = []
    for n, ((t_text, t_type), k) in enumerate(zip(triggers, anatomy_counts)):
        if n:
            b.add(rng.choice(("and a", "as well as a", "with an associated")))
        b.add(rng.choice(_MODIFIERS))
        t_span = b.add(t_text)
        anatomies = []
        if k:
            b.add(rng.choice(_VERBS))
            for j in range(k):
                if j:
                    b.add("and" if j == k - 1 else ",")
                b.add("the")
                a_text, parent, child = pool.pop()
                anatomies.append(AnatomyEntity(a_text, AnatomyLabel(parent, child), b.add(a_text)))
        events.append(Event(Trigger(t_text, t_type, t_span), tuple(anatomies)))
    b.add(f"with maximum SUV {rng.randint(2, 25)}.{rng.randint(0, 9)}")
    return b.text(), events


def _alignable(text: str, events: list[Event]) -> bool:
    return attach_spans(text, [e.without_spans() for e in events]) == events


def synthetic_corpus(
    n_sentences: int,
    seed: int = 0,
    shape: Optional[SyntheticShape] = None,
    doc_size: tuple[int, int] = (4, 9),
) -> tuple[Corpus, dict[SentenceKey, list[Event]]]:
    """Corpus with exactly ``round(trigger_rate * n)`` finding sentences and
    ``round(anatomy_rate * n)`` anatomies in total."""
    shape = shape or SyntheticShape()
    rng = random.Random(seed)
    n_found = round(shape.trigger_rate * n_sentences)
    n_two = min(n_found, round(shape.two_trigger_rate * n_sentences))
    trigger_counts = [2] * n_two + [1] * (n_found - n_two)
    slots = sum(trigger_counts)
    n_anat = round(shape.anatomy_rate * n_sentences)
    if n_anat > slots * shape.max_anatomies:
        raise ValueError("anatomy rate too high for the trigger budget")
    per_slot = [n_anat // slots + (1 if i < n_anat % slots else 0) for i in range(slots)] if slots else []
    rng.shuffle(per_slot)

    plans: list[list[int]] = []
    it = iter(per_slot)
    for count in trigger_counts:
        plans.append([next(it) for _ in range(count)])
    plans += [[]] * (n_sentences - n_found)
    rng.shuffle(plans)

    seen: set[str] = set()
    sentences: list[tuple[str, list[Event]]] = []
    for plan in plans:
        for _ in range(200):
            if plan:
                trig = rng.sample(TRIGGERS, len(plan))
                text, events = _finding_sentence(rng, trig, plan)
                events.sort(key=lambda e: e.trigger.span.start)
                ok = _alignable(text, events)
            else:
                if rng.random() < 0.3:
                    text = rng.choice(_HEADERS)
                else:
                    text = f"{rng.choice(_QUIET)} ( series {rng.randint(1, 9)} image {rng.randint(1, 300)} )."
                events, ok = [], True
            if ok and (not events or text not in seen):
                break
        else:
            raise RuntimeError("could not generate an alignable sentence")
        seen.add(text)
        sentences.append((text, events))

    documents = []
    gold: dict[SentenceKey, list[Event]] = {}
    pos = 0
    while pos < len(sentences):
        size = rng.randint(*doc_size)
        chunk = sentences[pos:pos + size]
        doc_id = f"doc{len(documents):04d}"
        documents.append(Document(doc_id, tuple(t for t, _ in chunk), rng.choice(EXAM_TYPES)))
        for i, (_, events) in enumerate(chunk):
            if events:
                gold[(doc_id, i)] = events
        pos += size
    return Corpus(documents), gold
