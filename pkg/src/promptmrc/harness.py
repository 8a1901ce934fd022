"""Experiment harnesses: question-strategy comparison and cross-corpus evaluation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .corpus import Document, Schema
from .metrics import evaluate_concepts, evaluate_relations
from .pipeline import predict_concepts, run_end_to_end
from .templates import ConfigError, Strategy
from .training import TrainConfig, task_instances, train_model


@dataclass
class TrainedSystem:
    concept: object
    trigger: object
    relation: object
    strategy: Strategy


def train_system(train_docs: Sequence[Document], schema: Schema, config: TrainConfig,
                 strategy="natural", share_trigger_model: bool = True) -> TrainedSystem:
    """Concept model over all categories plus a relation model.

    With ``share_trigger_model`` the concept model also serves pass 1 of the
    relation pipeline; otherwise a trigger-only model is trained.
    """
    strategy = Strategy.parse(strategy)
    concept = train_model(task_instances(train_docs, schema, "concept", strategy, config.max_seq_len),
                          config, schema=schema)
    trigger = concept if share_trigger_model else train_model(
        task_instances(train_docs, schema, "trigger", strategy, config.max_seq_len), config, schema=schema)
    rel_insts = task_instances(train_docs, schema, "relation", strategy, config.max_seq_len)
    relation = train_model(rel_insts, config, schema=schema) if rel_insts else None
    return TrainedSystem(concept, trigger, relation, strategy)


def evaluate_system(system: TrainedSystem, test_docs: Sequence[Document], schema: Schema) -> dict:
    concept_preds = [Document(d.doc_id, d.text, tuple(predict_concepts(system.concept, d, schema,
                                                                       system.strategy)))
                     for d in test_docs]
    rel_preds = []
    for d in test_docs:
        if system.relation is None:
            rel_preds.append(Document(d.doc_id, d.text))
            continue
        out = run_end_to_end(d, system.trigger, system.relation, schema, system.strategy)
        rel_preds.append(out.to_document(d.text))
    return {
        "concept_strict_f1": evaluate_concepts(test_docs, concept_preds, "strict").micro.f1,
        "concept_lenient_f1": evaluate_concepts(test_docs, concept_preds, "lenient").micro.f1,
        "relation_strict_f1": evaluate_relations(test_docs, rel_preds, "strict").micro.f1,
        "relation_lenient_f1": evaluate_relations(test_docs, rel_preds, "lenient").micro.f1,
    }


@dataclass
class StrategyComparison:
    rows: dict  # strategy -> {"concept": f1, "relation": f1}

    def to_tsv(self) -> str:
        lines = ["strategy\tconcept_strict_f1\trelation_strict_f1"]
        for strat, row in self.rows.items():
            lines.append(f"{strat}\t{row['concept']:.4f}\t{row['relation']:.4f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.rows, indent=2, sort_keys=True) + "\n"


def compare_question_strategies(train_docs: Sequence[Document], test_docs: Sequence[Document],
                                schema: Schema, config: TrainConfig = TrainConfig(),
                                strategies=(Strategy.NATURAL, Strategy.PSEUDO)) -> StrategyComparison:
    """Train otherwise-identical systems per question strategy; report strict F1 per task."""
    if not test_docs:
        raise ConfigError("strategy comparison needs a non-empty test split")
    rows = {}
    for strat in strategies:
        strat = Strategy.parse(strat)
        system = train_system(train_docs, schema, config, strat)
        scores = evaluate_system(system, test_docs, schema)
        rows[strat.value] = {"concept": scores["concept_strict_f1"], "relation": scores["relation_strict_f1"]}
    return StrategyComparison(rows)


@dataclass
class CrossSplitReport:
    f1_same: float
    f1_other: float
    task: str = "concept"

    @property
    def drop(self) -> float:
        return self.f1_same - self.f1_other

    def to_tsv(self) -> str:
        return ("task\tf1_same\tf1_other\tdrop\n"
                f"{self.task}\t{self.f1_same:.4f}\t{self.f1_other:.4f}\t{self.drop:.4f}\n")


def _categories(docs: Sequence[Document]) -> set:
    return {m.category for d in docs for m in d.concepts}


def cross_split_eval(train_docs: Sequence[Document], test_same: Sequence[Document],
                     test_other: Sequence[Document], schema: Schema,
                     config: TrainConfig = TrainConfig(), strategy="natural") -> CrossSplitReport:
    """Train on one corpus, report strict concept F1 on an in-domain and an external test set."""
    if not test_other:
        raise ConfigError("cross-split evaluation needs a non-empty external test corpus")
    if not test_same:
        raise ConfigError("cross-split evaluation needs a non-empty in-domain test corpus")
    known = set(schema.concept_categories)
    for name, docs in (("train", train_docs), ("test_same", test_same), ("test_other", test_other)):
        extra = _categories(docs) - known
        if extra:
            raise ConfigError(f"{name} corpus uses categories outside the schema: {sorted(extra)}")
    model = train_model(task_instances(train_docs, schema, "concept", strategy, config.max_seq_len),
                        config, schema=schema)

    def score(docs):
        preds = [Document(d.doc_id, d.text, tuple(predict_concepts(model, d, schema, strategy))) for d in docs]
        return evaluate_concepts(docs, preds, "strict").micro.f1

    same = score(test_same)
    other = same if test_other is test_same else score(test_other)
    return CrossSplitReport(same, other)
