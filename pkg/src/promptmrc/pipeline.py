"""Concept prediction and the two-pass trigger -> attribute relation pipeline."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import ConceptMention, Document, RelationAnnotation, Schema, serialize_brat, split_sentences
from .instances import (MrcInstance, build_concept_instances, build_relation_instances, gold_triggers)
from .model import MrcModel
from .templates import ConfigError, Strategy


@dataclass(frozen=True)
class TriggerMention:
    mention: ConceptMention
    provenance: str  # "gold" | "predicted"


@dataclass(frozen=True)
class RelationTriple:
    trigger: ConceptMention
    relation_type: str
    attribute: ConceptMention
    question: str = ""


@dataclass
class PipelineOutput:
    doc_id: str
    concepts: list[ConceptMention]
    triples: list[RelationTriple]
    diagnostics: Counter = field(default_factory=Counter)

    def to_document(self, text: str) -> Document:
        rels = tuple(RelationAnnotation(t.relation_type, t.trigger.id, t.attribute.id) for t in self.triples)
        return Document(self.doc_id, text, tuple(self.concepts), rels)

    def diagnostics_row(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "concepts": len(self.concepts),
            "triples": len(self.triples),
            **{k: v for k, v in sorted(self.diagnostics.items())},
            "provenance": [{"trigger": t.trigger.key, "relation": t.relation_type, "question": t.question}
                           for t in self.triples],
        }


def _mention_from_span(inst: MrcInstance, start_tok: int, end_tok: int, category: str, doc_text: str,
                       ident: str) -> ConceptMention:
    span = inst.char_span(start_tok, end_tok)
    return ConceptMention(ident, category, (span,), doc_text[span.start:span.end])


def _dedup_sorted(mentions: list[ConceptMention]) -> list[ConceptMention]:
    seen = {}
    for m in mentions:
        seen.setdefault(m.key, m)
    return [seen[k] for k in sorted(seen, key=lambda k: (k[1], k[2], k[0]))]


def predict_concepts(model: MrcModel, doc: Document, schema: Schema, strategy="natural",
                     categories: Sequence[str] | None = None, tau: float | None = None,
                     stats: Counter | None = None) -> list[ConceptMention]:
    """Ask every (sentence, category) question and decode answers into mentions."""
    sentences = split_sentences(Document(doc.doc_id, doc.text))
    insts = build_concept_instances(Document(doc.doc_id, doc.text), schema, strategy, categories,
                                    sentences, model.config.max_seq_len, stats)
    spans = model.predict_spans(insts, tau)
    found = []
    for inst, pairs in zip(insts, spans):
        for s, e in pairs:
            found.append(_mention_from_span(inst, s, e, inst.answer_category, doc.text, ""))
    found = _dedup_sorted(found)
    return [ConceptMention(f"T{i}", m.category, m.fragments, m.text) for i, m in enumerate(found, 1)]


def extract_triggers(doc: Document, trigger_model: MrcModel | None, schema: Schema, strategy="natural",
                     oracle: bool = False, tau: float | None = None) -> list[TriggerMention]:
    if oracle:
        return [TriggerMention(m, "gold") for m in gold_triggers(doc, schema)]
    if trigger_model is None:
        raise ConfigError("a trigger model is required unless oracle triggers are requested")
    mentions = predict_concepts(trigger_model, doc, schema, strategy, list(schema.trigger_categories), tau)
    return [TriggerMention(m, "predicted") for m in mentions]


def check_schema(model: MrcModel | None, schema: Schema, role: str) -> None:
    if model is not None and model.schema and model.schema != schema.fingerprint():
        raise ConfigError(f"{role} model was trained against a different schema")


def run_end_to_end(doc: Document, trigger_model: MrcModel | None, relation_model: MrcModel | None,
                   schema: Schema, strategy="natural", tau: float | None = None,
                   oracle_triggers: bool = False, oracle_answers: bool = False) -> PipelineOutput:
    """Pass 1 finds triggers; pass 2 asks one question per (trigger, compatible relation).

    ``oracle_answers`` replaces pass-2 decoding with the gold answers of each
    relation instance (for pipeline testing); pass 2 then needs no model.
    """
    strategy = Strategy.parse(strategy)
    check_schema(trigger_model, schema, "trigger")
    check_schema(relation_model, schema, "relation")
    diag: Counter = Counter()
    triggers = extract_triggers(doc, trigger_model, schema, strategy, oracle=oracle_triggers, tau=tau)
    unique = _dedup_sorted([t.mention for t in triggers])
    diag["duplicate_triggers"] = len(triggers) - len(unique)
    diag["triggers"] = len(unique)

    sentences = split_sentences(doc if (oracle_triggers or oracle_answers) else Document(doc.doc_id, doc.text))
    source = doc if oracle_answers else Document(doc.doc_id, doc.text)
    max_len = relation_model.config.max_seq_len if relation_model is not None else 128
    insts = build_relation_instances(source, unique, schema, strategy, sentences, max_len, diag)
    if oracle_answers:
        answers = [list(i.answer_spans) for i in insts]
    elif insts:
        if relation_model is None:
            raise ConfigError("a relation model is required unless oracle answers are requested")
        answers = relation_model.predict_spans(insts, tau)
    else:
        answers = []
    diag["empty_answers"] = sum(1 for a in answers if not a)

    concepts: dict = {m.key: m for m in unique}
    raw_triples = []
    for inst, pairs in zip(insts, answers):
        trig_cat, rel_name = inst.question.target
        tkey = (inst.trigger["category"], *inst.trigger["span"])
        for s, e in pairs:
            attr = _mention_from_span(inst, s, e, inst.answer_category, doc.text, "")
            concepts.setdefault(attr.key, attr)
            raw_triples.append((tkey, rel_name, attr.key, inst.question.text))

    ordered = sorted(concepts.values(), key=lambda m: (m.envelope.start, m.envelope.end, m.category))
    renamed = {m.key: ConceptMention(f"T{i}", m.category, m.fragments, m.text) for i, m in enumerate(ordered, 1)}
    triples = []
    seen = set()
    for tkey, rel_name, akey, question in sorted(raw_triples, key=lambda r: (r[0][1], r[0][2], r[2][1], r[2][2], r[1])):
        if (tkey, rel_name, akey) in seen:
            continue
        seen.add((tkey, rel_name, akey))
        triples.append(RelationTriple(renamed[tkey], rel_name, renamed[akey], question))
    return PipelineOutput(doc.doc_id, list(renamed.values()), triples, diag)


def write_predictions(outputs: Sequence[PipelineOutput], texts: dict, out_dir: "str | Path",
                      diagnostics_name: str = "diagnostics.jsonl") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / diagnostics_name, "w", encoding="utf-8") as fh:
        for out in outputs:
            doc = out.to_document(texts[out.doc_id])
            (out_dir / f"{out.doc_id}.ann").write_text(serialize_brat(doc), encoding="utf-8")
            (out_dir / f"{out.doc_id}.txt").write_text(texts[out.doc_id], encoding="utf-8")
            fh.write(json.dumps(out.diagnostics_row(), sort_keys=True) + "\n")


def concept_output(doc: Document, mentions: list[ConceptMention]) -> PipelineOutput:
    return PipelineOutput(doc.doc_id, mentions, [], Counter())
