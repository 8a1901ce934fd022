import numpy as np
import pytest

from promptmrc.corpus import CharSpan, ConceptMention, Document, RelationAnnotation
from promptmrc.metrics import (evaluate_all, evaluate_concepts, evaluate_relations, match_concepts,
                               match_relations, micro_prf, reports_to_json, reports_to_tsv)


@pytest.mark.parametrize("gold, pred, strict, lenient", [
    ([("Drug", 0, 4)], [("Drug", 0, 4)], (1, 0, 0), (1, 0, 0)),
    ([("Drug", 0, 10)], [("Drug", 2, 8)], (0, 1, 1), (1, 0, 0)),
    ([("Drug", 0, 4)], [("ADE", 0, 4)], (0, 1, 1), (0, 1, 1)),
    ([], [], (0, 0, 0), (0, 0, 0)),
    # one pred overlapping two golds is credited once
    ([("Drug", 0, 5), ("Drug", 6, 10)], [("Drug", 3, 8)], (0, 1, 2), (1, 0, 1)),
    # the exact pair is taken first, leaving the overlap to match the other gold
    ([("Drug", 0, 5), ("Drug", 2, 9)], [("Drug", 0, 5), ("Drug", 1, 8)], (1, 1, 1), (2, 0, 0)),
])
def test_match_concepts_cases(gold, pred, strict, lenient):
    assert match_concepts(gold, pred, "strict") == strict
    assert match_concepts(gold, pred, "lenient") == lenient


def test_match_relations_cases():
    t = ("Drug:Reason-Drug", ("Drug", 0, 7), ("Reason", 12, 16))
    assert match_relations([t], [t]) == (1, 0, 0)
    wrong = ("Drug:Duration-Drug",) + t[1:]
    assert match_relations([t], [wrong], "strict") == (0, 1, 1)
    assert match_relations([t], [wrong], "lenient") == (0, 1, 1)
    shifted = (t[0], ("Drug", 2, 9), t[2])
    assert match_relations([t], [shifted], "strict") == (0, 1, 1)
    assert match_relations([t], [shifted], "lenient") == (1, 0, 0)


def test_micro_prf_cases():
    r = micro_prf({"Drug": (2, 1, 1)})
    assert (r.micro.precision, r.micro.recall, r.micro.f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3))
    r = micro_prf({"Drug": (0, 0, 0)})
    assert (r.micro.precision, r.micro.recall, r.micro.f1) == (0.0, 0.0, 0.0)
    r = micro_prf({"A": (1, 0, 0), "B": (1, 1, 1)})
    assert (r.micro.precision, r.micro.recall, r.micro.f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3))


def random_doc(rng, doc_id, cats=("Drug", "Reason", "Duration"), n_max=6, length=60):
    mentions = []
    for k in range(int(rng.integers(0, n_max + 1))):
        s = int(rng.integers(0, length - 1))
        e = int(rng.integers(s + 1, min(length, s + 12) + 1))
        mentions.append(ConceptMention(f"T{k + 1}", str(rng.choice(cats)), (CharSpan(s, e),), "x" * (e - s)))
    rels = []
    drugs = [m for m in mentions if m.category == "Drug"]
    others = [m for m in mentions if m.category != "Drug"]
    for k, (d, o) in enumerate(zip(drugs, others)):
        rels.append(RelationAnnotation(f"{o.category}-Drug", d.id, o.id, f"R{k + 1}"))
    return Document(doc_id, "x" * length, tuple(mentions), tuple(rels))


def perturb(doc, rng):
    out = []
    for m in doc.concepts:
        r = rng.random()
        if r < 0.15:
            continue
        s, e = m.envelope.start, m.envelope.end
        if r < 0.5:
            s = max(0, s + int(rng.integers(-2, 3)))
            e = max(s + 1, e + int(rng.integers(-2, 3)))
        out.append(ConceptMention(m.id, m.category, (CharSpan(s, e),), "x" * (e - s)))
    kept = {m.id for m in out}
    rels = tuple(r for r in doc.relations if r.arg1 in kept and r.arg2 in kept)
    extra = random_doc(rng, doc.doc_id, n_max=2)
    extra_concepts = tuple(ConceptMention(f"X{m.id}", m.category, m.fragments, m.text) for m in extra.concepts)
    return Document(doc.doc_id, doc.text, tuple(out) + extra_concepts, rels)


def test_randomised_properties():
    rng = np.random.default_rng(11)
    for k in range(1000):
        g = random_doc(rng, f"d{k}")
        p = perturb(g, rng)
        for ev in (evaluate_concepts, evaluate_relations):
            s, l_ = ev([g], [p], "strict").micro, ev([g], [p], "lenient").micro
            assert s.tp <= l_.tp and s.tp <= min(s.tp + s.fp, s.tp + s.fn)
            assert l_.f1 >= s.f1
            for crit in ("strict", "lenient"):
                a, b = ev([g], [p], crit).micro, ev([p], [g], crit).micro
                assert (a.tp, a.fp, a.fn) == (b.tp, b.fn, b.fp)
                assert a.precision == b.recall and a.recall == b.precision


def test_self_score_is_perfect(small_corpus):
    for r in evaluate_all(small_corpus, small_corpus):
        assert r.micro.f1 == 1.0 and r.micro.precision == 1.0 and r.micro.recall == 1.0


def test_missing_prediction_docs_count_as_empty(small_corpus):
    r = evaluate_concepts(small_corpus, small_corpus[:5])
    assert r.micro.precision == 1.0 and r.micro.recall < 1.0


def test_reports_serialise(small_corpus):
    reports = evaluate_all(small_corpus, small_corpus)
    tsv = reports_to_tsv(reports)
    assert tsv.splitlines()[0].startswith("task\tcriterion")
    assert "concept\tstrict\tMICRO" in tsv
    assert '"micro"' in reports_to_json(reports)
