"""Deterministic synthetic BRAT corpus generator.

Documents mix plain drug sentences, related and unrelated attribute
sentences, filler, and a nested pattern in which a Duration phrase contains
both a Drug and a Reason mention ("continue it as long as <drug> relieves
your <reason>"), mirroring overlap structures seen in clinical annotation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import CharSpan, ConceptMention, Document, RelationAnnotation, Schema
from .templates import schema_from_config

SYNTH_SCHEMA_CONFIG = {
    "name": "synthetic",
    "quote_trigger": True,
    "concepts": [
        {"category": "Drug", "trigger": True,
         "question": "Find the drug events including names, brand names and collective names."},
        {"category": "Duration", "question": "How long to take the medication?"},
        {"category": "Reason", "question": "What is the medical reason for giving the medication?"},
    ],
    "relations": [
        {"name": "Duration-Drug", "trigger": "Drug", "attribute": "Duration",
         "question": "How long to take {trigger}?"},
        {"name": "Reason-Drug", "trigger": "Drug", "attribute": "Reason",
         "question": "What is the medical reason for giving {trigger}?"},
    ],
}

_SYLLABLES = {
    "base": ["ta", "ro", "mi", "zol", "pra", "ven", "dil", "cor", "sel", "bu", "fen", "lo"],
    "shifted": ["qua", "xe", "vy", "kro", "jub", "wex", "ozz", "yth", "plu", "gim", "sna", "hek"],
}
_REASONS = {
    "base": ["rash", "pain", "fever", "cough", "nausea", "headache", "itching", "insomnia",
             "anxiety", "hypertension", "infection", "reflux", "asthma", "migraine", "arthritis",
             "acne"],
    "shifted": ["gout", "vertigo", "eczema", "angina", "colitis", "sciatica", "psoriasis", "bronchitis",
                "neuralgia", "tinnitus", "myalgia", "edema", "pruritus", "dyspepsia", "urticaria",
                "sinusitis"],
}
_NUMBERS = ["two", "three", "four", "five", "ten", "2", "3", "7", "14", "30"]
_UNITS = ["days", "weeks", "months"]
_FILLERS = [
    "Vitals are stable.", "Follow up in clinic next month.", "No acute distress noted.",
    "Patient is alert and oriented.", "Labs were reviewed with the team.",
]


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    num_documents: int = 50
    nesting_rate: float = 0.3
    relation_density: float = 0.8
    vocabulary_size: int = 30
    min_sentences: int = 3
    max_sentences: int = 6
    seed: int = 0
    vocabulary: str = "base"
    doc_prefix: str = "doc"

    def __post_init__(self):
        for name in ("nesting_rate", "relation_density"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.vocabulary not in _SYLLABLES:
            raise ValueError(f"unknown vocabulary {self.vocabulary!r}")
        if self.num_documents < 0 or not 1 <= self.min_sentences <= self.max_sentences:
            raise ValueError("invalid document/sentence counts")


def synthetic_schema() -> Schema:
    return schema_from_config(SYNTH_SCHEMA_CONFIG)


def drug_names(spec: SyntheticCorpusSpec) -> list[str]:
    """Vocabulary depends only on size and variant, never on the corpus seed."""
    rng = np.random.default_rng(1000 + sorted(_SYLLABLES).index(spec.vocabulary))
    syl = _SYLLABLES[spec.vocabulary]
    names: list[str] = []
    while len(names) < spec.vocabulary_size:
        k = int(rng.integers(2, 4))
        word = "".join(syl[int(i)] for i in rng.integers(0, len(syl), size=k))
        word = word.capitalize()
        if word not in names:
            names.append(word)
    return names


class _Builder:
    """Accumulates text and annotations with exact offsets."""

    def __init__(self):
        self.parts: list[str] = []
        self.length = 0
        self.mentions: list[tuple[str, int, int]] = []
        self.relations: list[tuple[str, int, int]] = []

    def add(self, text: str, category: str | None = None) -> int | None:
        start = self.length
        self.parts.append(text)
        self.length += len(text)
        if category is None:
            return None
        self.mentions.append((category, start, self.length))
        return len(self.mentions) - 1

    def mark(self, category: str, start: int, end: int) -> int:
        self.mentions.append((category, start, end))
        return len(self.mentions) - 1

    def relate(self, name: str, trig: int, attr: int) -> None:
        self.relations.append((name, trig, attr))

    def document(self, doc_id: str) -> Document:
        text = "".join(self.parts)
        order = sorted(range(len(self.mentions)), key=lambda i: (self.mentions[i][1], self.mentions[i][2],
                                                                  self.mentions[i][0]))
        ids = {old: f"T{new}" for new, old in enumerate(order, 1)}
        concepts = tuple(ConceptMention(ids[i], cat, (CharSpan(s, e),), text[s:e])
                         for i in order for cat, s, e in [self.mentions[i]])
        rels = tuple(RelationAnnotation(name, ids[t], ids[a], f"R{k}")
                     for k, (name, t, a) in enumerate(self.relations, 1))
        return Document(doc_id, text, concepts, rels)


def _duration(rng) -> str:
    return f"{_NUMBERS[int(rng.integers(len(_NUMBERS)))]} {_UNITS[int(rng.integers(len(_UNITS)))]}"


def _sentence(b: _Builder, kind: str, rng, drugs, reasons) -> None:
    drug = drugs[int(rng.integers(len(drugs)))]
    reason = reasons[int(rng.integers(len(reasons)))]
    if kind == "nested":
        b.add("Continue it ")
        start = b.length
        b.add("as long as ")
        d = b.add(drug, "Drug")
        b.add(" relieves your ")
        r = b.add(reason, "Reason")
        outer = b.mark("Duration", start, b.length)
        b.add(".")
        b.relate("Duration-Drug", d, outer)
        b.relate("Reason-Drug", d, r)
    elif kind == "reason":
        b.add("Patient takes ")
        d = b.add(drug, "Drug")
        b.add(" for ")
        r = b.add(reason, "Reason")
        b.add(".")
        b.relate("Reason-Drug", d, r)
    elif kind == "duration":
        b.add("Continue ")
        d = b.add(drug, "Drug")
        b.add(" for ")
        t = b.add(_duration(rng), "Duration")
        b.add(".")
        b.relate("Duration-Drug", d, t)
    elif kind == "both":
        b.add("Start ")
        d = b.add(drug, "Drug")
        b.add(" for ")
        r = b.add(reason, "Reason")
        b.add(" and use it for ")
        t = b.add(_duration(rng), "Duration")
        b.add(".")
        b.relate("Reason-Drug", d, r)
        b.relate("Duration-Drug", d, t)
    elif kind == "lone_reason":
        b.add("History of ")
        b.add(reason, "Reason")
        b.add(".")
    elif kind == "lone_drug":
        b.add(drug, "Drug")
        b.add(" was discontinued.")
    else:
        b.add(_FILLERS[int(rng.integers(len(_FILLERS)))])


def generate_corpus(spec: SyntheticCorpusSpec = SyntheticCorpusSpec()) -> list[Document]:
    rng = np.random.default_rng(spec.seed)
    drugs = drug_names(spec)
    reasons = _REASONS[spec.vocabulary]
    related = ["reason", "duration", "both"]
    unrelated = ["lone_reason", "lone_drug", "filler"]
    docs = []
    width = max(3, len(str(spec.num_documents)))
    for k in range(spec.num_documents):
        b = _Builder()
        n = int(rng.integers(spec.min_sentences, spec.max_sentences + 1))
        for s in range(n):
            if s:
                b.add("\n" if rng.random() < 0.3 else " ")
            if rng.random() < spec.nesting_rate:
                kind = "nested"
            elif rng.random() < spec.relation_density:
                kind = related[int(rng.integers(len(related)))]
            else:
                kind = unrelated[int(rng.integers(len(unrelated)))]
            _sentence(b, kind, rng, drugs, reasons)
        b.add("\n")
        docs.append(b.document(f"{spec.doc_prefix}{k:0{width}d}"))
    return docs


def is_nested_sentence_gold(mentions) -> bool:
    """True if some mention strictly contains two inner mentions of different categories."""
    for outer in mentions:
        inner = [m for m in mentions if m is not outer and outer.envelope.contains(m.envelope)
                 and m.envelope != outer.envelope]
        if len({m.category for m in inner}) >= 2:
            return True
    return False
