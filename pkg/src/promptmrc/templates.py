"""Question (prompt) generation for concept and trigger-anchored relation queries."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import ConceptMention, RelationSpec, Schema

PLACEHOLDER = "{trigger}"
BUNDLED = ("drug_ade", "sdoh")


class ConfigError(ValueError):
    pass


class Strategy(str, enum.Enum):
    NATURAL = "natural"
    PSEUDO = "pseudo"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ConfigError(f"unknown question strategy {value!r}") from None


@dataclass(frozen=True)
class QuestionTemplate:
    target: "str | tuple[str, str]"
    strategy: Strategy
    template: str

    def __post_init__(self):
        count = self.template.count(PLACEHOLDER)
        if isinstance(self.target, tuple) and count != 1:
            raise ConfigError(f"relation template for {self.target} needs exactly one {PLACEHOLDER}")
        if isinstance(self.target, str) and count:
            raise ConfigError(f"concept template for {self.target} must not contain {PLACEHOLDER}")


@dataclass(frozen=True)
class RenderedQuestion:
    text: str
    target: "str | tuple[str, str]"
    trigger_mention: ConceptMention | None = None

    @property
    def target_label(self) -> str:
        if isinstance(self.target, tuple):
            return f"{self.target[0]}:{self.target[1]}"
        return self.target


def render_concept_question(category: str, schema: Schema, strategy="natural") -> RenderedQuestion:
    strategy = Strategy.parse(strategy)
    if category not in schema.concept_categories:
        raise ConfigError(f"category {category!r} not in schema")
    if strategy is Strategy.PSEUDO:
        return RenderedQuestion(f"entity: {category}", category)
    template = schema.concept_templates.get(category)
    if not template:
        raise ConfigError(f"no natural template for concept {category!r}")
    return RenderedQuestion(template, category)


def render_relation_question(relation: "str | RelationSpec", trigger: ConceptMention, schema: Schema,
                             strategy="natural") -> RenderedQuestion:
    strategy = Strategy.parse(strategy)
    name = relation.name if isinstance(relation, RelationSpec) else relation
    try:
        spec = schema.relation(trigger.category, name)
    except KeyError:
        raise ConfigError(f"relation {name!r} does not pair with trigger category "
                          f"{trigger.category!r}") from None
    quoted = f'"{trigger.text}"'
    if strategy is Strategy.PSEUDO:
        text = f"{spec.trigger} ; {spec.name} ; {spec.attribute} {quoted}"
    else:
        if not spec.template:
            raise ConfigError(f"no natural template for relation {spec.trigger}:{spec.name}")
        text = spec.template.replace(PLACEHOLDER, quoted if schema.quote_trigger else trigger.text)
    return RenderedQuestion(text, (spec.trigger, spec.name), trigger)


def schema_from_config(cfg: dict) -> Schema:
    """Build a schema from the JSON template config, collecting every gap before failing."""
    missing = []
    concepts = cfg.get("concepts") or []
    relations = cfg.get("relations") or []
    if not concepts:
        missing.append("no concept categories defined (each needs a natural question)")
    names, triggers, templates = [], [], {}
    for entry in concepts:
        cat = entry.get("category")
        if not cat:
            missing.append(f"concept entry without category: {entry}")
            continue
        names.append(cat)
        if entry.get("trigger"):
            triggers.append(cat)
        q = entry.get("question")
        if not q:
            missing.append(f"concept {cat}: missing natural question")
        else:
            QuestionTemplate(cat, Strategy.NATURAL, q)
            templates[cat] = q
    specs = []
    for entry in relations:
        name, trig, attr = entry.get("name"), entry.get("trigger"), entry.get("attribute")
        if not (name and trig and attr):
            missing.append(f"relation entry needs name/trigger/attribute: {entry}")
            continue
        q = entry.get("question")
        if not q:
            missing.append(f"relation {trig}:{name}: missing natural question")
            q = ""
        else:
            QuestionTemplate((trig, name), Strategy.NATURAL, q)
        specs.append(RelationSpec(name, trig, attr, q))
    if missing:
        raise ConfigError("incomplete template config:\n  " + "\n  ".join(missing))
    try:
        return Schema(tuple(names), tuple(triggers), tuple(specs), templates,
                      quote_trigger=bool(cfg.get("quote_trigger", True)), name=cfg.get("name", ""))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_schema_templates(path: "str | Path") -> Schema:
    """Load a schema/template file; ``drug_ade`` and ``sdoh`` name the bundled configs."""
    if str(path) in BUNDLED:
        text = resources.files("promptmrc.data").joinpath(f"{path}.json").read_text(encoding="utf-8")
    else:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"schema file not found: {p}")
        text = p.read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return schema_from_config(cfg)


def schema_to_config(schema: Schema) -> dict:
    return {
        "name": schema.name,
        "quote_trigger": schema.quote_trigger,
        "concepts": [
            {"category": c, **({"trigger": True} if c in schema.trigger_categories else {}),
             "question": schema.concept_templates.get(c, "")}
            for c in schema.concept_categories
        ],
        "relations": [
            {"name": r.name, "trigger": r.trigger, "attribute": r.attribute, "question": r.template}
            for r in schema.relations
        ],
    }
