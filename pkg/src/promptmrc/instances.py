"""Tokenization with offsets and (QUESTION, CONTEXT, ANSWER) instance assembly."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import CharSpan, ConceptMention, Document, Schema, Sentence, sentence_of, split_sentences
from .templates import RenderedQuestion, render_concept_question, render_relation_question

logger = logging.getLogger(__name__)

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)
DEFAULT_MAX_SEQ_LEN = 128


@dataclass(frozen=True)
class Token:
    text: str
    span: CharSpan


def _is_punct(ch: str) -> bool:
    return not ch.isalnum()


def tokenize_with_offsets(text: str) -> list[Token]:
    """Whitespace split, then peel leading/trailing punctuation into one-char tokens."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        lo, hi = i, j
        lead = []
        while lo < hi and _is_punct(text[lo]):
            lead.append(Token(text[lo], CharSpan(lo, lo + 1)))
            lo += 1
        trail = []
        while hi > lo and _is_punct(text[hi - 1]):
            trail.append(Token(text[hi - 1], CharSpan(hi - 1, hi)))
            hi -= 1
        tokens.extend(lead)
        if lo < hi:
            tokens.append(Token(text[lo:hi], CharSpan(lo, hi)))
        tokens.extend(reversed(trail))
        i = j
    return tokens


def align_char_spans_to_tokens(mention: "ConceptMention | CharSpan", tokens: Sequence[Token],
                               offset: int = 0) -> tuple[int, int] | None:
    """Token range overlapping the mention envelope, or None if unalignable.

    ``offset`` is the document position of the tokens' origin (the sentence start).
    """
    env = mention.envelope if isinstance(mention, ConceptMention) else mention
    start = env.start - offset
    end = env.end - offset
    hits = [i for i, t in enumerate(tokens) if t.span.start < end and start < t.span.end]
    if not hits:
        return None
    return hits[0], hits[-1]


@dataclass(frozen=True)
class GoldSpanLabels:
    y_start: np.ndarray
    y_end: np.ndarray
    y_match: frozenset

    @classmethod
    def from_spans(cls, n: int, spans: Iterable[tuple[int, int]]) -> "GoldSpanLabels":
        spans = frozenset(spans)
        ys = np.zeros(n, dtype=np.int64)
        ye = np.zeros(n, dtype=np.int64)
        for s, e in spans:
            ys[s] = 1
            ye[e] = 1
        return cls(ys, ye, spans)


@dataclass
class MrcInstance:
    question: RenderedQuestion
    context: Sentence
    context_tokens: list[Token]
    question_tokens: list[str]
    answer_spans: list[tuple[int, int]]
    answer_category: str
    trigger: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def doc_id(self) -> str:
        return self.context.doc_id

    @property
    def n(self) -> int:
        return len(self.context_tokens)

    @property
    def context_offset(self) -> int:
        """Position of the first context token in the encoded sequence."""
        return len(self.question_tokens) + 2

    def labels(self) -> GoldSpanLabels:
        return GoldSpanLabels.from_spans(self.n, self.answer_spans)

    def input_ids(self, vocab: "Vocab") -> np.ndarray:
        words = [CLS, *self.question_tokens, SEP, *(t.text for t in self.context_tokens), SEP]
        return np.array([vocab.id(w) for w in words], dtype=np.int64)

    def segment_ids(self) -> np.ndarray:
        seg = np.zeros(self.context_offset + self.n + 1, dtype=np.int64)
        seg[self.context_offset:] = 1
        return seg

    def char_span(self, start_tok: int, end_tok: int) -> CharSpan:
        """Document-level character span covered by a token range."""
        base = self.context.span.start
        return CharSpan(base + self.context_tokens[start_tok].span.start,
                        base + self.context_tokens[end_tok].span.end)

    def to_json(self) -> dict:
        q = self.question
        return {
            "doc_id": self.doc_id,
            "sentence_span": [self.context.span.start, self.context.span.end],
            "context": self.context.text,
            "question": q.text,
            "target": list(q.target) if isinstance(q.target, tuple) else q.target,
            "answer_category": self.answer_category,
            "question_tokens": self.question_tokens,
            "context_tokens": [[t.text, t.span.start, t.span.end] for t in self.context_tokens],
            "answers": [
                {"tokens": [s, e], "chars": [self.char_span(s, e).start, self.char_span(s, e).end]}
                for s, e in self.answer_spans
            ],
            "trigger": self.trigger,
        }

    @classmethod
    def from_json(cls, row: dict) -> "MrcInstance":
        target = tuple(row["target"]) if isinstance(row["target"], list) else row["target"]
        trig = row.get("trigger")
        trig_mention = None
        if trig:
            trig_mention = ConceptMention(trig["id"], trig["category"],
                                          (CharSpan(*trig["span"]),), trig["text"])
        span = CharSpan(*row["sentence_span"])
        return cls(
            question=RenderedQuestion(row["question"], target, trig_mention),
            context=Sentence(row["doc_id"], span, row["context"]),
            context_tokens=[Token(t, CharSpan(s, e)) for t, s, e in row["context_tokens"]],
            question_tokens=list(row["question_tokens"]),
            answer_spans=[tuple(a["tokens"]) for a in row["answers"]],
            answer_category=row["answer_category"],
            trigger=trig,
        )


class Vocab:
    """Word-level vocabulary with lowercase lookup."""

    def __init__(self, words: Iterable[str] = ()):
        self.itos = list(SPECIALS)
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        key = word if word in SPECIALS else word.lower()
        if key not in self.stoi:
            self.stoi[key] = len(self.itos)
            self.itos.append(key)
        return self.stoi[key]

    def id(self, word: str) -> int:
        key = word if word in SPECIALS else word.lower()
        return self.stoi.get(key, 1)

    def __len__(self) -> int:
        return len(self.itos)

    @classmethod
    def build(cls, instances: Iterable[MrcInstance], min_count: int = 1) -> "Vocab":
        counts: Counter = Counter()
        for inst in instances:
            counts.update(w.lower() for w in inst.question_tokens)
            counts.update(t.text.lower() for t in inst.context_tokens)
        return cls(sorted(w for w, c in counts.items() if c >= min_count))

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, words: list[str]) -> "Vocab":
        v = cls()
        for w in words[len(SPECIALS):]:
            v.add(w)
        return v


def _make_instance(question: RenderedQuestion, sentence: Sentence, answer_category: str,
                   gold: Iterable[ConceptMention], max_seq_len: int, stats: Counter,
                   trigger: dict | None = None, tokens: list[Token] | None = None) -> MrcInstance:
    q_tokens = [t.text for t in tokenize_with_offsets(question.text)]
    c_tokens = tokens if tokens is not None else tokenize_with_offsets(sentence.text)
    budget = max_seq_len - len(q_tokens) - 3
    if budget < 1:
        raise ValueError(f"question of {len(q_tokens)} tokens leaves no room in max_seq_len={max_seq_len}")
    answers = set()
    for m in gold:
        pair = align_char_spans_to_tokens(m, c_tokens, sentence.span.start)
        if pair is None:
            stats["unalignable"] += 1
            logger.debug("unalignable mention %s in %s", m.id, sentence.doc_id)
            continue
        answers.add(pair)
    if len(c_tokens) > budget:
        c_tokens = c_tokens[:budget]
        lost = [a for a in answers if a[1] >= budget]
        if lost:
            stats["truncated_answers"] += len(lost)
            logger.warning("%s: truncation dropped %d gold answers", sentence.doc_id, len(lost))
        answers = {a for a in answers if a[1] < budget}
        stats["truncated_instances"] += 1
    return MrcInstance(question, sentence, list(c_tokens), q_tokens, sorted(answers),
                       answer_category, trigger)


def build_concept_instances(doc: Document, schema: Schema, strategy="natural",
                            categories: Sequence[str] | None = None,
                            sentences: list[Sentence] | None = None,
                            max_seq_len: int = DEFAULT_MAX_SEQ_LEN,
                            stats: Counter | None = None) -> list[MrcInstance]:
    """One instance per (sentence, category); answers are that category's gold mentions."""
    stats = stats if stats is not None else Counter()
    sentences = sentences if sentences is not None else split_sentences(doc)
    categories = list(categories) if categories is not None else list(schema.concept_categories)
    questions = {c: render_concept_question(c, schema, strategy) for c in categories}
    out = []
    for sent in sentences:
        tokens = tokenize_with_offsets(sent.text)
        inside = [m for m in doc.concepts if sent.span.contains(m.envelope)]
        for cat in categories:
            gold = [m for m in inside if m.category == cat]
            out.append(_make_instance(questions[cat], sent, cat, gold, max_seq_len, stats,
                                      tokens=tokens))
    stats["concept_instances"] += len(out)
    return out


def trigger_record(m: ConceptMention) -> dict:
    env = m.envelope
    return {"id": m.id, "category": m.category, "span": [env.start, env.end], "text": m.text}


def build_relation_instances(doc: Document, triggers: Sequence[ConceptMention], schema: Schema,
                             strategy="natural", sentences: list[Sentence] | None = None,
                             max_seq_len: int = DEFAULT_MAX_SEQ_LEN,
                             stats: Counter | None = None) -> list[MrcInstance]:
    """One instance per (trigger, compatible relation type), restricted to the trigger's sentence.

    Gold answers come from the document's relations whose trigger has the
    same category and envelope as the given trigger.
    """
    stats = stats if stats is not None else Counter()
    sentences = sentences if sentences is not None else split_sentences(doc)
    by_id = {m.id: m for m in doc.concepts}
    out = []
    for trig in triggers:
        specs = schema.relations_for(trig.category)
        if not specs:
            stats["triggers_without_relations"] += 1
            continue
        sent = sentence_of(sentences, trig.envelope)
        if sent is None:
            stats["trigger_outside_sentence"] += 1
            continue
        tokens = tokenize_with_offsets(sent.text)
        same = {m.id for m in doc.concepts if m.key == trig.key}
        for spec in specs:
            gold = []
            for rel in doc.relations:
                if rel.relation_type != spec.name or rel.arg1 not in same:
                    continue
                attr = by_id[rel.arg2]
                if sent.span.contains(attr.envelope):
                    gold.append(attr)
                else:
                    stats["unreachable_cross_sentence"] += 1
            question = render_relation_question(spec, trig, schema, strategy)
            out.append(_make_instance(question, sent, spec.attribute, gold, max_seq_len, stats,
                                      trigger=trigger_record(trig), tokens=tokens))
    stats["relation_instances"] += len(out)
    return out


def gold_triggers(doc: Document, schema: Schema) -> list[ConceptMention]:
    return [m for m in doc.concepts if m.category in schema.trigger_categories]


def write_jsonl(instances: Iterable[MrcInstance], path: "str | Path") -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def read_jsonl(path: "str | Path") -> list[MrcInstance]:
    with open(path, encoding="utf-8") as fh:
        return [MrcInstance.from_json(json.loads(line)) for line in fh if line.strip()]


def bio_conflicts(mentions: Iterable[ConceptMention], tokens: Sequence[Token], offset: int = 0) -> list[int]:
    """Token indices that would need more than one BIO tag to encode ``mentions``."""
    tags: dict[int, set] = {}
    for m in mentions:
        pair = align_char_spans_to_tokens(m, tokens, offset)
        if pair is None:
            continue
        s, e = pair
        for i in range(s, e + 1):
            tags.setdefault(i, set()).add(("B-" if i == s else "I-") + m.category)
    return sorted(i for i, t in tags.items() if len(t) > 1)
