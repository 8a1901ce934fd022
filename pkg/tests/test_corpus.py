import pytest

from promptmrc.corpus import (CharSpan, Document, ParseError, canonical_form, parse_brat_document,
                              read_corpus, serialize_brat, split_sentences, write_corpus)


def test_parse_single_entity(drug_schema):
    doc = parse_brat_document("Pt takes Pantoprazole daily.", "T1\tDrug 9 21\tPantoprazole", drug_schema)
    assert len(doc.concepts) == 1
    m = doc.concepts[0]
    assert (m.category, m.envelope, m.text) == ("Drug", CharSpan(9, 21), "Pantoprazole")


def test_parse_empty():
    doc = parse_brat_document("", "")
    assert doc.concepts == () and doc.relations == ()


def test_relation_category_mismatch(drug_schema):
    text = "Aspirin twice daily"
    ann = "T1\tDrug 0 7\tAspirin\nT2\tFrequency 8 19\ttwice daily\nR1\tStrength-Drug Arg1:T1 Arg2:T2\n"
    with pytest.raises(ParseError, match="relation type/category mismatch"):
        parse_brat_document(text, ann, drug_schema)


@pytest.mark.parametrize("ann, message", [
    ("T1\tDrug 9 x\tPantoprazole", "malformed"),
    ("T1\tDrug 9 200\tPantoprazole", "beyond text"),
    ("T1\tDrug 9 21\tPantoprazolE", "text mismatch"),
    ("T1\tDrug 9 21\tPantoprazole\nR1\tStrength-Drug Arg1:T1 Arg2:T9", "dangling"),
    ("T1\tBogus 9 21\tPantoprazole", "not in schema"),
])
def test_parse_errors_name_line(drug_schema, ann, message):
    with pytest.raises(ParseError, match=message) as exc:
        parse_brat_document("Pt takes Pantoprazole daily.", ann, drug_schema)
    assert "line" in str(exc.value)


def test_other_lines_ignored_and_counted(drug_schema):
    ann = "T1\tDrug 9 21\tPantoprazole\nA1\tNegated T1\n#1\tAnnotatorNotes T1\tnote\nE1\tX:T1\n"
    doc = parse_brat_document("Pt takes Pantoprazole daily.", ann, drug_schema)
    assert doc.ignored_lines == 3
    assert len(doc.concepts) == 1


def test_attribute_first_relation_is_reoriented(drug_schema):
    text = "Aspirin 81 mg"
    ann = "T1\tDrug 0 7\tAspirin\nT2\tStrength 8 13\t81 mg\nR1\tStrength-Drug Arg1:T2 Arg2:T1\n"
    doc = parse_brat_document(text, ann, drug_schema)
    rel = doc.relations[0]
    assert (rel.arg1, rel.arg2) == ("T1", "T2")


def test_serialize_examples(drug_schema):
    doc = parse_brat_document("Pt takes Pantoprazole daily.", "T1\tDrug 9 21\tPantoprazole", drug_schema)
    assert serialize_brat(doc) == "T1\tDrug 9 21\tPantoprazole\n"
    assert serialize_brat(Document("x", "")) == ""
    text = "Aspirin 81 mg"
    ann = "T1\tDrug 0 7\tAspirin\nT2\tStrength 8 13\t81 mg\nR1\tStrength-Drug Arg1:T1 Arg2:T2\n"
    lines = serialize_brat(parse_brat_document(text, ann, drug_schema)).splitlines()
    assert [line[0] for line in lines] == ["T", "T", "R"]
    assert lines[2] == "R1\tStrength-Drug Arg1:T1 Arg2:T2"


def test_multi_fragment_round_trip(drug_schema):
    text = "pain in left and right knee"
    ann = "T7\tReason 0 4;17 27\tpain right knee\n"
    doc = parse_brat_document(text, ann, drug_schema)
    m = doc.concepts[0]
    assert len(m.fragments) == 2 and m.envelope == CharSpan(0, 27)
    again = parse_brat_document(text, serialize_brat(doc), drug_schema)
    assert canonical_form(again) == canonical_form(doc)


def test_line_order_insensitive(drug_schema):
    text = "Aspirin 81 mg"
    lines = ["T1\tDrug 0 7\tAspirin", "T2\tStrength 8 13\t81 mg", "R1\tStrength-Drug Arg1:T1 Arg2:T2"]
    a = parse_brat_document(text, "\n".join(lines), drug_schema)
    b = parse_brat_document(text, "\n".join(reversed(lines)), drug_schema)
    assert canonical_form(a) == canonical_form(b)


def test_round_trip_synthetic(small_corpus, synth_schema):
    for doc in small_corpus:
        again = parse_brat_document(doc.text, serialize_brat(doc), synth_schema, doc.doc_id)
        assert canonical_form(again) == canonical_form(doc)


def test_corpus_directory_round_trip(tmp_path, small_corpus, synth_schema):
    write_corpus(small_corpus, tmp_path)
    loaded = read_corpus(tmp_path, synth_schema)
    assert [canonical_form(d) for d in loaded] == [canonical_form(d) for d in small_corpus]


@pytest.mark.parametrize("text, expected", [
    ("He smokes. ETOH: none.", ["He smokes.", "ETOH: none."]),
    ("Line one\nLine two", ["Line one", "Line two"]),
    ("Dose 1.5 mg daily.", ["Dose 1.5 mg daily."]),
    ("Seen today. 2 tabs given! ok? Fine", ["Seen today.", "2 tabs given! ok?", "Fine"]),
])
def test_split_sentences(text, expected):
    sents = split_sentences(text)
    assert [s.text for s in sents] == expected
    for s in sents:
        assert text[s.span.start:s.span.end] == s.text


def test_sentences_cover_non_whitespace(small_corpus):
    for doc in small_corpus:
        sents = split_sentences(doc)
        covered = set()
        for a, b in zip(sents, sents[1:]):
            assert a.span.end <= b.span.start
        for s in sents:
            covered.update(range(s.span.start, s.span.end))
        assert all(i in covered for i, ch in enumerate(doc.text) if not ch.isspace())
        for m in doc.concepts:
            assert any(s.span.contains(m.envelope) for s in sents)


def test_sentence_extended_over_straddling_mention(drug_schema):
    text = "Take it for pain. Then rest."
    doc = parse_brat_document(text, "T1\tReason 12 22\tpain. Then", drug_schema)
    sents = split_sentences(doc)
    assert len(sents) == 1 and sents[0].text == text
