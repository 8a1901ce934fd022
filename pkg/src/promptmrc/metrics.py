"""Strict and lenient micro-averaged precision/recall/F1 for concepts and relations."""
from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import ConceptMention, Document


class Criterion(str, enum.Enum):
    STRICT = "strict"
    LENIENT = "lenient"


# A scored mention is (category, start, end) over the envelope span.
Mention = tuple


def as_mention(m) -> Mention:
    if isinstance(m, ConceptMention):
        return m.key
    return tuple(m)


@dataclass
class PRF:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def add(self, tp: int, fp: int, fn: int) -> None:
        self.tp += tp
        self.fp += fp
        self.fn += fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


@dataclass
class EvalReport:
    task: str
    criterion: Criterion
    per_category: dict = field(default_factory=dict)
    micro: PRF = field(default_factory=PRF)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "criterion": self.criterion.value,
            "per_category": {k: v.to_dict() for k, v in sorted(self.per_category.items())},
            "micro": self.micro.to_dict(),
        }

    def tsv_rows(self) -> list[str]:
        rows = []
        for name, prf in sorted(self.per_category.items()) + [("MICRO", self.micro)]:
            rows.append("\t".join([self.task, self.criterion.value, name, str(prf.tp), str(prf.fp),
                                   str(prf.fn), f"{prf.precision:.4f}", f"{prf.recall:.4f}",
                                   f"{prf.f1:.4f}"]))
        return rows


TSV_HEADER = "task\tcriterion\tcategory\ttp\tfp\tfn\tprecision\trecall\tf1"


def _overlap(a: Mention, b: Mention) -> int:
    return max(0, min(a[2], b[2]) - max(a[1], b[1]))


def _greedy(gold: list, pred: list, score) -> int:
    """One-to-one matching: exact-equal pairs first, then by descending ``score``.

    Ties are broken by the unordered pair of items so that swapping gold and
    pred yields the same matching size.
    """
    used_g, used_p = set(), set()
    tp = 0
    index = defaultdict(list)
    for j, p in enumerate(pred):
        index[p].append(j)
    for i, g in enumerate(gold):
        bucket = index.get(g)
        if bucket:
            used_g.add(i)
            used_p.add(bucket.pop(0))
            tp += 1
    if score is not None:
        cands = []
        for i, g in enumerate(gold):
            if i in used_g:
                continue
            for j, p in enumerate(pred):
                if j in used_p:
                    continue
                s = score(g, p)
                if s > 0:
                    lo, hi = sorted((g, p))
                    cands.append((-s, lo, hi, i, j))
        cands.sort(key=lambda c: c[:3])
        for _, _, _, i, j in cands:
            if i in used_g or j in used_p:
                continue
            used_g.add(i)
            used_p.add(j)
            tp += 1
    return tp


def _lenient_concept_score(g: Mention, p: Mention) -> int:
    return _overlap(g, p) if g[0] == p[0] else 0


def match_concepts(gold: Iterable, pred: Iterable, criterion="strict") -> tuple[int, int, int]:
    gold = [as_mention(m) for m in gold]
    pred = [as_mention(m) for m in pred]
    criterion = Criterion(criterion)
    score = _lenient_concept_score if criterion is Criterion.LENIENT else None
    tp = _greedy(gold, pred, score)
    return tp, len(pred) - tp, len(gold) - tp


# A scored triple is (relation_type, trigger Mention, attribute Mention).

def _lenient_relation_score(g, p) -> int:
    if g[0] != p[0]:
        return 0
    a = _lenient_concept_score(g[1], p[1])
    b = _lenient_concept_score(g[2], p[2])
    return a + b if a and b else 0


def match_relations(gold: Iterable, pred: Iterable, criterion="strict") -> tuple[int, int, int]:
    gold = [tuple(t) for t in gold]
    pred = [tuple(t) for t in pred]
    criterion = Criterion(criterion)
    score = _lenient_relation_score if criterion is Criterion.LENIENT else None
    tp = _greedy(gold, pred, score)
    return tp, len(pred) - tp, len(gold) - tp


def micro_prf(counts: dict, task: str = "concept", criterion="strict") -> EvalReport:
    """Pool per-category ``(tp, fp, fn)`` counts into a micro-averaged report."""
    report = EvalReport(task, Criterion(criterion))
    for cat, c in counts.items():
        prf = c if isinstance(c, PRF) else PRF(*c)
        report.per_category[cat] = PRF(prf.tp, prf.fp, prf.fn)
        report.micro.add(prf.tp, prf.fp, prf.fn)
    return report


def document_triples(doc: Document) -> list[tuple]:
    by_id = {m.id: m for m in doc.concepts}
    return [(f"{by_id[r.arg1].category}:{r.relation_type}", by_id[r.arg1].key, by_id[r.arg2].key)
            for r in doc.relations]


def _pair_docs(gold_docs: Sequence[Document], pred_docs: Sequence[Document]):
    preds = {d.doc_id: d for d in pred_docs}
    for g in gold_docs:
        yield g, preds.get(g.doc_id, Document(g.doc_id, g.text))
    gold_ids = {g.doc_id for g in gold_docs}
    for p in pred_docs:
        if p.doc_id not in gold_ids:
            yield Document(p.doc_id, p.text), p


def evaluate_concepts(gold_docs, pred_docs, criterion="strict", categories=None) -> EvalReport:
    counts: dict = defaultdict(PRF)
    for cat in categories or ():
        counts[cat] = PRF()
    for g, p in _pair_docs(gold_docs, pred_docs):
        cats = {m.category for m in g.concepts} | {m.category for m in p.concepts}
        if categories is not None:
            cats &= set(categories)
        for cat in cats:
            counts[cat].add(*match_concepts([m for m in g.concepts if m.category == cat],
                                            [m for m in p.concepts if m.category == cat], criterion))
    return micro_prf(dict(counts), "concept", criterion)


def evaluate_relations(gold_docs, pred_docs, criterion="strict") -> EvalReport:
    counts: dict = defaultdict(PRF)
    for g, p in _pair_docs(gold_docs, pred_docs):
        gt, pt = document_triples(g), document_triples(p)
        for rel in {t[0] for t in gt} | {t[0] for t in pt}:
            counts[rel].add(*match_relations([t for t in gt if t[0] == rel],
                                             [t for t in pt if t[0] == rel], criterion))
    return micro_prf(dict(counts), "relation", criterion)


def evaluate_all(gold_docs, pred_docs, relations: bool = True) -> list[EvalReport]:
    reports = []
    for crit in (Criterion.STRICT, Criterion.LENIENT):
        reports.append(evaluate_concepts(gold_docs, pred_docs, crit))
        if relations:
            reports.append(evaluate_relations(gold_docs, pred_docs, crit))
    return reports


def reports_to_tsv(reports: Sequence[EvalReport]) -> str:
    lines = [TSV_HEADER]
    for r in reports:
        lines.extend(r.tsv_rows())
    return "\n".join(lines) + "\n"


def reports_to_json(reports: Sequence[EvalReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"
