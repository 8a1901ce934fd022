"""BRAT standoff corpora: parsing, serialization and sentence splitting."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    """Malformed annotation line; the message names the offending line."""

    def __init__(self, message: str, line_no: int | None = None, doc_id: str = ""):
        where = f"{doc_id}:" if doc_id else ""
        prefix = f"{where}line {line_no}: " if line_no is not None else where
        super().__init__(prefix + message)
        self.line_no = line_no


@dataclass(frozen=True, order=True)
class CharSpan:
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span {self.start}..{self.end}")

    def overlaps(self, other: "CharSpan") -> bool:
        return self.start < other.end and other.start < self.end

    def overlap_len(self, other: "CharSpan") -> int:
        return max(0, min(self.end, other.end) - max(self.start, other.start))

    def contains(self, other: "CharSpan") -> bool:
        return self.start <= other.start and other.end <= self.end


@dataclass(frozen=True)
class ConceptMention:
    id: str
    category: str
    fragments: tuple[CharSpan, ...]
    text: str

    @property
    def envelope(self) -> CharSpan:
        return CharSpan(self.fragments[0].start, self.fragments[-1].end)

    @property
    def key(self) -> tuple[str, int, int]:
        env = self.envelope
        return (self.category, env.start, env.end)


@dataclass(frozen=True)
class RelationAnnotation:
    relation_type: str
    arg1: str
    arg2: str
    id: str = ""


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    concepts: tuple[ConceptMention, ...] = ()
    relations: tuple[RelationAnnotation, ...] = ()
    ignored_lines: int = 0

    def mention(self, mention_id: str) -> ConceptMention:
        for m in self.concepts:
            if m.id == mention_id:
                return m
        raise KeyError(mention_id)


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    span: CharSpan
    text: str


@dataclass(frozen=True)
class RelationSpec:
    """A relation anchored at a trigger category; keyed by (trigger, name)."""

    name: str
    trigger: str
    attribute: str
    template: str = ""


@dataclass(frozen=True)
class Schema:
    concept_categories: tuple[str, ...]
    trigger_categories: tuple[str, ...]
    relations: tuple[RelationSpec, ...]
    concept_templates: dict = field(default_factory=dict, compare=False, hash=False)
    quote_trigger: bool = True
    name: str = ""

    def __post_init__(self):
        cats = set(self.concept_categories)
        bad = [t for t in self.trigger_categories if t not in cats]
        if bad:
            raise ValueError(f"trigger categories not in concept set: {bad}")
        for rel in self.relations:
            for cat in (rel.trigger, rel.attribute):
                if cat not in cats:
                    raise ValueError(f"relation {rel.name} references unknown category {cat}")
            if rel.trigger not in self.trigger_categories:
                raise ValueError(f"relation {rel.name} anchored at non-trigger {rel.trigger}")
        keys = [(r.trigger, r.name) for r in self.relations]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (trigger, relation) pairs in schema")

    def relations_for(self, trigger_category: str) -> list[RelationSpec]:
        return [r for r in self.relations if r.trigger == trigger_category]

    def relation(self, trigger_category: str, name: str) -> RelationSpec:
        for r in self.relations:
            if r.trigger == trigger_category and r.name == name:
                return r
        raise KeyError((trigger_category, name))

    def fingerprint(self) -> dict:
        return {
            "concepts": list(self.concept_categories),
            "triggers": list(self.trigger_categories),
            "relations": [[r.trigger, r.name, r.attribute] for r in self.relations],
        }


_T_LINE = re.compile(r"^(T\d+)\t(\S+) (\d+ \d+(?:;\d+ \d+)*)\t(.*)$")
_R_LINE = re.compile(r"^(R\d+)\t(\S+) Arg1:(\S+) Arg2:(\S+)\s*$")
_SPAN_PART = re.compile(r"^(\d+) (\d+)$")


def _parse_fragments(spec: str, line_no: int, doc_id: str) -> tuple[CharSpan, ...]:
    frags = []
    for part in spec.split(";"):
        m = _SPAN_PART.match(part)
        if not m:
            raise ParseError(f"malformed offset {part!r}", line_no, doc_id)
        start, end = int(m.group(1)), int(m.group(2))
        if start >= end:
            raise ParseError(f"malformed offset {start} {end}", line_no, doc_id)
        frags.append(CharSpan(start, end))
    frags.sort()
    for a, b in zip(frags, frags[1:]):
        if a.end > b.start:
            raise ParseError("overlapping fragments within one mention", line_no, doc_id)
    return tuple(frags)


def fragment_text(text: str, fragments: Iterable[CharSpan]) -> str:
    return " ".join(text[f.start:f.end] for f in fragments)


def parse_brat_document(txt_content: str, ann_content: str, schema: Schema | None = None,
                        doc_id: str = "") -> Document:
    """Parse one ``.txt``/``.ann`` pair.

    Only T- and R-lines are interpreted; other line types are counted in
    ``Document.ignored_lines``. With a schema, categories and relation
    pairings are validated. Relations written attribute-first are
    reoriented so that ``arg1`` is always the trigger side.
    """
    concepts: dict[str, ConceptMention] = {}
    raw_relations: list[tuple[int, str, str, str, str]] = []
    ignored = 0
    for line_no, line in enumerate(ann_content.splitlines(), start=1):
        if not line.strip():
            continue
        head = line[0]
        if head == "T":
            m = _T_LINE.match(line)
            if not m:
                raise ParseError(f"malformed entity line {line!r}", line_no, doc_id)
            tid, category, spans, surface = m.groups()
            frags = _parse_fragments(spans, line_no, doc_id)
            if frags[-1].end > len(txt_content):
                raise ParseError(f"offset {frags[-1].end} beyond text length {len(txt_content)}",
                                 line_no, doc_id)
            expected = fragment_text(txt_content, frags)
            if surface != expected:
                raise ParseError(f"text mismatch: {surface!r} vs document {expected!r}",
                                 line_no, doc_id)
            if schema is not None and category not in schema.concept_categories:
                raise ParseError(f"category {category!r} not in schema", line_no, doc_id)
            if tid in concepts:
                raise ParseError(f"duplicate id {tid}", line_no, doc_id)
            concepts[tid] = ConceptMention(tid, category, frags, surface)
        elif head == "R":
            m = _R_LINE.match(line)
            if not m:
                raise ParseError(f"malformed relation line {line!r}", line_no, doc_id)
            raw_relations.append((line_no, *m.groups()))
        else:
            ignored += 1
    if ignored:
        logger.warning("%s: ignored %d non T/R annotation lines", doc_id or "<doc>", ignored)

    relations = []
    for line_no, rid, rtype, a1, a2 in raw_relations:
        for arg in (a1, a2):
            if arg not in concepts:
                raise ParseError(f"dangling relation argument {arg}", line_no, doc_id)
        m1, m2 = concepts[a1], concepts[a2]
        if schema is not None:
            trig_cats = schema.trigger_categories
            if m1.category not in trig_cats and m2.category in trig_cats:
                m1, m2 = m2, m1
            try:
                spec = schema.relation(m1.category, rtype)
            except KeyError:
                spec = None
            if spec is None or spec.attribute != m2.category:
                raise ParseError(
                    f"relation type/category mismatch: {rtype} between "
                    f"{m1.category} and {m2.category}", line_no, doc_id)
        relations.append(RelationAnnotation(rtype, m1.id, m2.id, rid))

    ordered = sorted(concepts.values(), key=lambda c: (c.envelope.start, c.envelope.end,
                                                       c.category, _id_num(c.id)))
    relations.sort(key=lambda r: _id_num(r.id))
    return Document(doc_id, txt_content, tuple(ordered), tuple(relations), ignored)


def _id_num(ident: str) -> int:
    digits = ident[1:]
    return int(digits) if digits.isdigit() else 0


def serialize_brat(doc: Document) -> str:
    """Write T-lines then R-lines with fresh sequential ids."""
    lines = []
    new_ids = {}
    concepts = sorted(doc.concepts, key=lambda c: (c.envelope.start, c.envelope.end, c.category))
    for i, c in enumerate(concepts, start=1):
        new_ids[c.id] = f"T{i}"
        spans = ";".join(f"{f.start} {f.end}" for f in c.fragments)
        lines.append(f"T{i}\t{c.category} {spans}\t{c.text}")
    rels = sorted(doc.relations, key=lambda r: (new_ids[r.arg1], new_ids[r.arg2], r.relation_type))
    for i, r in enumerate(rels, start=1):
        lines.append(f"R{i}\t{r.relation_type} Arg1:{new_ids[r.arg1]} Arg2:{new_ids[r.arg2]}")
    return "\n".join(lines) + ("\n" if lines else "")


def canonical_form(doc: Document) -> tuple:
    """Id-free view of a document, for round-trip comparison."""
    concepts = sorted((c.category, tuple((f.start, f.end) for f in c.fragments), c.text)
                      for c in doc.concepts)
    by_id = {c.id: c for c in doc.concepts}
    rels = sorted((r.relation_type, by_id[r.arg1].key, by_id[r.arg2].key) for r in doc.relations)
    return (doc.text, tuple(concepts), tuple(rels))


_BOUNDARY = re.compile(r"[.?!](?=\s+[A-Z0-9])")


def split_sentences(doc: Document | str, doc_id: str = "") -> list[Sentence]:
    """Split at newlines and at ``.?!`` followed by whitespace and an
    uppercase letter or digit.

    A sentence is extended to cover any gold mention that would otherwise
    straddle a boundary.
    """
    if isinstance(doc, Document):
        text, doc_id, mentions = doc.text, doc.doc_id, doc.concepts
    else:
        text, mentions = doc, ()
    cuts = set()
    for m in _BOUNDARY.finditer(text):
        cuts.add(m.end())
    for i, ch in enumerate(text):
        if ch == "\n":
            cuts.add(i)
    raw = []
    prev = 0
    for cut in sorted(cuts) + [len(text)]:
        if cut <= prev:
            continue
        raw.append([prev, cut])
        prev = cut
    pieces = []
    for start, end in raw:
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start < end:
            pieces.append([start, end])
    for m in mentions:
        env = m.envelope
        for i, (s, e) in enumerate(pieces):
            if s <= env.start < e and env.end > e:
                j = i
                while j + 1 < len(pieces) and pieces[j + 1][0] < env.end:
                    j += 1
                pieces[i][1] = max(env.end, pieces[j][1])
                del pieces[i + 1:j + 1]
                break
    return [Sentence(doc_id, CharSpan(s, e), text[s:e]) for s, e in pieces]


def sentence_of(sentences: list[Sentence], span: CharSpan) -> Sentence | None:
    for sent in sentences:
        if sent.span.contains(span):
            return sent
    return None


def read_corpus(directory: str | Path, schema: Schema | None = None) -> list[Document]:
    """Load every ``*.txt`` with its sibling ``.ann`` (missing ``.ann`` means no annotations)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {directory}")
    docs = []
    for txt_path in sorted(directory.glob("*.txt")):
        ann_path = txt_path.with_suffix(".ann")
        txt = txt_path.read_text(encoding="utf-8")
        ann = ann_path.read_text(encoding="utf-8") if ann_path.exists() else ""
        docs.append(parse_brat_document(txt, ann, schema, doc_id=txt_path.stem))
    return docs


def write_corpus(docs: Iterable[Document], directory: str | Path, write_text: bool = True) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for doc in docs:
        if write_text:
            (directory / f"{doc.doc_id}.txt").write_text(doc.text, encoding="utf-8")
        (directory / f"{doc.doc_id}.ann").write_text(serialize_brat(doc), encoding="utf-8")
