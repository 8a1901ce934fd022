import json

import pytest
from hypothesis import given, strategies as st

from promptmrc.corpus import CharSpan, ConceptMention
from promptmrc.templates import (ConfigError, QuestionTemplate, Strategy, load_schema_templates,
                                 render_concept_question, render_relation_question, schema_from_config)


def trigger(category, text, start=0):
    return ConceptMention("T1", category, (CharSpan(start, start + len(text)),), text)


def test_concept_natural_and_pseudo(drug_schema, sdoh_schema):
    assert render_concept_question("Strength", drug_schema).text == \
        "What is the active ingredient amount of Pantoprazole?"
    assert render_concept_question("Drug", drug_schema).text == \
        "Find the drug events including names, brand names and collective names."
    assert render_concept_question("Drug", drug_schema, "pseudo").text == "entity: Drug"
    assert render_concept_question("StatusEmploy", sdoh_schema).text == \
        "Find the status of employment like employed, unemployed and retired."


def test_relation_natural(sdoh_schema):
    q = render_relation_question("StatusEmploy", trigger("Employment", "Retired surgical nurse"), sdoh_schema)
    assert q.text == 'what is the status of employment associated with "Retired surgical nurse"'
    q = render_relation_question("StatusTime", trigger("Tobacco", "nonsmoker"), sdoh_schema)
    assert q.text == 'what is the status of tobacco use associated with "nonsmoker"'


def test_relation_pseudo(sdoh_schema):
    q = render_relation_question("Amount", trigger("Alcohol", "ETOH"), sdoh_schema, Strategy.PSEUDO)
    assert q.text == 'Alcohol ; Amount ; Amount "ETOH"'
    q = render_relation_question("Type", trigger("LivingStatus", "lives"), sdoh_schema, "pseudo")
    assert q.text == 'LivingStatus ; Type ; TypeLiving "lives"'


def test_relation_mismatch(sdoh_schema):
    with pytest.raises(ConfigError):
        render_relation_question("StatusEmploy", trigger("Tobacco", "smokes"), sdoh_schema)


def test_bundled_counts(drug_schema, sdoh_schema):
    assert len(drug_schema.trigger_categories) == 1
    assert len(drug_schema.relations) == 8
    assert len(drug_schema.concept_categories) == 9
    assert len(sdoh_schema.trigger_categories) == 5
    assert len(sdoh_schema.concept_categories) == 14
    per_trigger = {t: len(sdoh_schema.relations_for(t)) for t in sdoh_schema.trigger_categories}
    assert per_trigger == {"Employment": 4, "LivingStatus": 4, "Alcohol": 7, "Drug": 7, "Tobacco": 7}


def test_empty_config_lists_gaps(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("{}")
    with pytest.raises(ConfigError, match="no concept categories"):
        load_schema_templates(path)
    cfg = {"concepts": [{"category": "A", "trigger": True}, {"category": "B"}],
           "relations": [{"name": "r", "trigger": "A", "attribute": "B"}]}
    with pytest.raises(ConfigError) as exc:
        schema_from_config(cfg)
    msg = str(exc.value)
    assert "concept A" in msg and "concept B" in msg and "relation A:r" in msg


def test_template_placeholder_rules():
    with pytest.raises(ConfigError):
        QuestionTemplate(("Drug", "r"), Strategy.NATURAL, "no placeholder")
    with pytest.raises(ConfigError):
        QuestionTemplate("Drug", Strategy.NATURAL, "has {trigger}")


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_schema_templates("/nonexistent/schema.json")


def test_natural_and_pseudo_differ(drug_schema, sdoh_schema):
    for schema in (drug_schema, sdoh_schema):
        for cat in schema.concept_categories:
            assert render_concept_question(cat, schema).text != render_concept_question(cat, schema, "pseudo").text
        for rel in schema.relations:
            t = trigger(rel.trigger, "xyz")
            assert (render_relation_question(rel, t, schema).text
                    != render_relation_question(rel, t, schema, "pseudo").text)


@given(st.text(alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd")), min_size=3, max_size=12))
def test_rendering_pure_and_trigger_once(word):
    schema = load_schema_templates("sdoh")
    for rel in schema.relations:
        t = trigger(rel.trigger, "Q" + word + "Z")
        for strat in Strategy:
            a = render_relation_question(rel, t, schema, strat)
            b = render_relation_question(rel, t, schema, strat)
            assert a.text.encode() == b.text.encode()
            assert a.text.count(f'"{t.text}"') == 1


def test_config_round_trip(tmp_path, sdoh_schema):
    from promptmrc.templates import schema_to_config
    path = tmp_path / "s.json"
    path.write_text(json.dumps(schema_to_config(sdoh_schema)))
    again = load_schema_templates(path)
    assert again.fingerprint() == sdoh_schema.fingerprint()
    assert again.concept_templates == sdoh_schema.concept_templates
