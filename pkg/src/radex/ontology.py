"""Trigger types and the hierarchical anatomy categories.

The built-in anatomy table is the 16-parent hierarchy used for normalization.
Child names are kept verbatim, including the "Gallblader" spelling the
category table uses (the filter term list spells it "Gallbladder").
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

UNDETERMINED = "Undetermined"


class TriggerType(str, Enum):
    INDICATION = "Indication"
    LESION = "Lesion"
    MEDICAL_PROBLEM = "Medical_Problem"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "TriggerType":
        name = " ".join(text.split())
        for member in cls:
            if member.value == name:
                return member
        raise UnknownTriggerType(f"unknown trigger type {text!r}")


ANATOMY_CATEGORIES: dict[str, tuple[str, ...]] = {
    "Neurological": (
        UNDETERMINED, "Spine Cervical", "Spine Thoracic", "Spine Lumbar", "Spine Sacral",
        "Spine Cord", "Spine Unspecified", "Brain", "Nerve", "Pituitary",
        "Cerebrospinal Fluid Pathway", "Cerebrovascular System", "Extraaxial",
    ),
    "Cardiovascular": (
        UNDETERMINED, "Venous", "Arterial", "Pulmonary Artery", "Heart", "Pericardial Sac",
        "Coronary Artery",
    ),
    "Thoracic": (UNDETERMINED, "Mediastinal"),
    "Respiratory": (UNDETERMINED, "Lung", "Pleural Membrane", "Tracheobronchial"),
    "Digestive": (
        UNDETERMINED, "Esophagus", "Stomach", "Intestine", "Small Intestine", "Large Intestine",
    ),
    "Hepato-Biliary": (UNDETERMINED, "Gallblader", "Bile Duct", "Pancreas", "Liver"),
    "Urinary": (UNDETERMINED, "Kidney", "Urinary Bladder", "Ureter"),
    "Lymphatic": (UNDETERMINED,),
    "F Reproductive Obstetric": (
        UNDETERMINED, "Breast", "Ovary", "Uterus", "Adnexal", "Extra-embryonic",
        "Placenta", "Fetus", "Umbilical Cord", "Female Genital Structure",
    ),
    "M Reproductive": (UNDETERMINED, "Prostate", "Testis", "Epididymis"),
    "Musculo-Skeletal": (UNDETERMINED, "Skeletal and or Smooth Muscle", "Bone and or Joint"),
    "Body Regions": (UNDETERMINED, "Entire Body", "Pelvis", "Lower Limb", "Upper Limb"),
    "Head Neck": (
        UNDETERMINED, "Thyroid", "Neck", "Ear", "Eye", "Mouth", "Nasal Sinus",
        "Pharynx", "Laryngeal",
    ),
    "Skin": (UNDETERMINED, "Skin and or Mucous Membrane", "Subcutaneous"),
    "Abdomen": (
        UNDETERMINED, "Retroperitoneal", "Abdominal Wall", "Peritoneal Sac",
        "Spleen", "Adrenal Gland", "Mesentery",
    ),
    "Miscellaneous": (UNDETERMINED, "Adipose Tissue", "Connective Tissue", "Biomedical Device"),
}

ANATOMY_PARENTS: tuple[str, ...] = tuple(ANATOMY_CATEGORIES)

# Common anatomy terms used to pre-filter the retrieval pool, one string per
# row of the curated table (row headings included, stop words already removed).
_FILTER_TERM_ROWS = (
    "Neurological: Spine Cervical, Spine Thoracic, Spine Lumbar, Spine Sacral, Spine Cord, Spine, "
    "Brain, Nerve, Pituitary, Cerebrospinal, Cerebrovascular, Extraaxial",
    "Cardiovascular: Venous, Arterial, Pulmonary Artery, Heart, Pericardial Sac, Coronary Artery",
    "Thoracic: Mediastinal",
    "Respiratory: Lung, Pleural Membrane, Tracheobronchial",
    "Digestive: Esophagus, Stomach, Intestine, Intestine, Intestine",
    "Hepato-Biliary: Gallbladder, Bile, Pancreas, Liver",
    "Urinary: Kidney, Urinary Bladder, Ureter",
    "Reproductive: Breast, Ovary, Uterus, Adnexal, Extra-embryonic, Placenta, Fetus, Umbilical Cord, "
    "Genital Structure, Prostate, Testis, Epididymis",
    "Musculo-Skeletal: Skeletal, Smooth Muscle, Bone, Pelvis, Limb",
    "Head Neck: Thyroid, Neck, Ear, Eye, Mouth, Nasal Sinus, Pharynx, Laryngeal",
    "Skin: Skin, Mucous Membrane, Subcutaneous",
    "Abdomen: Retroperitoneal, Abdominal, Peritoneal Sac, Spleen, Adrenal, Mesentery, "
    "Adipose, Chest, Mediastinum, Osseous, Bones, Extremities, Lungs, Musculoskeletal, Ventricular, "
    "Bowel, Pleura, Spleen, Vasculature, Thorax, Gallbladder, Kidneys, Adrenals, Adrenal, Cardio",
)


class OntologyError(ValueError):
    pass


class UnknownTriggerType(OntologyError):
    pass


class UnknownParent(OntologyError):
    pass


class UnknownChild(OntologyError):
    pass


class ChildNotUnderParent(OntologyError):
    pass


@dataclass(frozen=True)
class AnatomyLabel:
    parent: str
    child: str

    def __str__(self) -> str:
        return f"{self.parent} | {self.child}"


def _squash(text: str) -> str:
    return " ".join(text.split())


class TermList(tuple):
    """Ordered anatomy filter terms, deduplicated case-insensitively."""

    def __new__(cls, terms: Iterable[str]):
        seen: set[str] = set()
        kept = []
        for term in terms:
            term = _squash(term)
            if term and term.lower() not in seen:
                seen.add(term.lower())
                kept.append(term)
        if not kept:
            raise ValueError("term list must not be empty")
        return super().__new__(cls, kept)

    def __contains__(self, term: object) -> bool:
        if not isinstance(term, str):
            return False
        needle = _squash(term).lower()
        return any(t.lower() == needle for t in self)

    @classmethod
    def from_file(cls, path: str | Path) -> "TermList":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(line for line in lines if line.strip() and not line.lstrip().startswith("#"))


def default_term_list() -> TermList:
    terms: list[str] = []
    for row in _FILTER_TERM_ROWS:
        heading, _, rest = row.partition(":")
        terms.append(heading)
        terms.extend(part for part in rest.split(",") if part.strip())
    return TermList(terms)


class Ontology:
    """Trigger types plus a parent -> children anatomy table.

    Immutable after construction. ``case_insensitive`` enables a lowercase
    fallback in :meth:`parse_label`; it is off by default so format drift in
    model output surfaces as errors instead of silently coercing.
    """

    def __init__(
        self,
        categories: Mapping[str, Iterable[str]] = ANATOMY_CATEGORIES,
        trigger_types: Iterable[str] = tuple(t.value for t in TriggerType),
        case_insensitive: bool = False,
    ):
        self._categories = {
            _squash(parent): tuple(_squash(c) for c in children)
            for parent, children in categories.items()
        }
        if not self._categories:
            raise OntologyError("ontology has no anatomy parents")
        for parent, children in self._categories.items():
            if not children:
                raise OntologyError(f"parent {parent!r} has no children")
        self.trigger_types = tuple(trigger_types)
        self.case_insensitive = case_insensitive
        self._child_owners: dict[str, set[str]] = {}
        for parent, children in self._categories.items():
            for child in children:
                self._child_owners.setdefault(child, set()).add(parent)
        self._lower_parents = {p.lower(): p for p in self._categories}
        self._lower_children = {c.lower(): c for c in self._child_owners}

    @classmethod
    def from_json(cls, path: str | Path, **kwargs) -> "Ontology":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
            raise OntologyError(f"{path}: expected an object mapping parents to child arrays")
        return cls(data, **kwargs)

    @property
    def parents(self) -> tuple[str, ...]:
        return tuple(self._categories)

    def children(self, parent: str) -> tuple[str, ...]:
        return self._categories[parent]

    def labels(self) -> Iterator[AnatomyLabel]:
        for parent, children in self._categories.items():
            for child in children:
                yield AnatomyLabel(parent, child)

    def __contains__(self, label: object) -> bool:
        return (
            isinstance(label, AnatomyLabel)
            and label.child in self._categories.get(label.parent, ())
        )

    def parse_label(self, text: str) -> AnatomyLabel:
        parts = text.split("|")
        if len(parts) != 2:
            raise UnknownParent(f"expected '<parent> | <child>', got {text!r}")
        parent, child = _squash(parts[0]), _squash(parts[1])
        if parent not in self._categories and self.case_insensitive:
            parent = self._lower_parents.get(parent.lower(), parent)
        if parent not in self._categories:
            raise UnknownParent(f"unknown anatomy parent {parent!r}")
        if child not in self._child_owners and self.case_insensitive:
            child = self._lower_children.get(child.lower(), child)
        if child not in self._child_owners:
            raise UnknownChild(f"unknown anatomy child {child!r}")
        if child not in self._categories[parent]:
            raise ChildNotUnderParent(f"{child!r} is not a child of {parent!r}")
        return AnatomyLabel(parent, child)

    def parse_trigger_type(self, text: str) -> TriggerType:
        return TriggerType.parse(text)

    def render(self, kind: str) -> str:
        if kind == "trigger":
            return " | ".join(self.trigger_types)
        if kind == "anatomy":
            return " ".join(
                f"{parent}: {', '.join(children)}"
                for parent, children in self._categories.items()
            )
        if kind == "joint":
            return f"trigger types: {self.render('trigger')} anatomy categories: {self.render('anatomy')}"
        raise ValueError(f"unknown ontology kind {kind!r}")


DEFAULT_ONTOLOGY = Ontology()


def parse_label(text: str) -> AnatomyLabel:
    return DEFAULT_ONTOLOGY.parse_label(text)


def render_ontology(kind: str) -> str:
    return DEFAULT_ONTOLOGY.render(kind)
