"""Start/end probability heads, start-end matching, multi-answer decoding and losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_CLAMP = 1e-12
DEFAULT_TAU = 0.5
DEFAULT_MAX_SPAN_LEN = 30


@dataclass(frozen=True)
class SpanProbabilities:
    p_start: np.ndarray
    p_end: np.ndarray


@dataclass(frozen=True)
class CandidateIndices:
    i_start: frozenset
    i_end: frozenset


@dataclass(frozen=True)
class MatchPrediction:
    pairs: tuple  # of (start_tok, end_tok, probability)


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        ws = (self.alpha, self.beta, self.gamma)
        if any(not 0.0 <= w <= 1.0 for w in ws):
            raise ValueError("loss weights must lie in [0, 1]")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class LossReport:
    l_start: float
    l_end: float
    l_span: float
    l_total: float


HEAD_NAMES = ("head.ws", "head.bs", "head.vs", "head.cs",
              "head.we", "head.be", "head.ve", "head.ce", "head.m", "head.mb")


def init_head(d: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    for side in ("s", "e"):
        params[f"head.w{side}"] = rng.normal(0.0, 0.02, size=(d, d))
        params[f"head.b{side}"] = np.zeros(d)
        params[f"head.v{side}"] = rng.normal(0.0, 0.02, size=(d, 2))
        params[f"head.c{side}"] = np.zeros(2)
    params["head.m"] = rng.normal(0.0, 0.02, size=2 * d)
    params["head.mb"] = np.zeros(1)
    return params


def head_param_count(d: int) -> int:
    return 2 * (d * d + d + 2 * d + 2) + 2 * d + 1


def softmax2(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def start_end_logits(H: np.ndarray, params: dict) -> tuple[np.ndarray, np.ndarray, dict]:
    """Two-stage linear maps ``(H W + b) V + c`` for start and end; works on any leading shape."""
    d = H.shape[-1]
    if params["head.ws"].shape[0] != d:
        raise ValueError(f"hidden size {d} does not match head ({params['head.ws'].shape[0]})")
    us = H @ params["head.ws"] + params["head.bs"]
    ue = H @ params["head.we"] + params["head.be"]
    ls = us @ params["head.vs"] + params["head.cs"]
    le = ue @ params["head.ve"] + params["head.ce"]
    return ls, le, {"us": us, "ue": ue}


def predict_start_end(H_context: np.ndarray, params: dict) -> SpanProbabilities:
    if H_context.shape[0] < 1:
        raise ValueError("empty context")
    ls, le, _ = start_end_logits(H_context, params)
    return SpanProbabilities(softmax2(ls), softmax2(le))


def candidate_indices(probs: SpanProbabilities) -> CandidateIndices:
    """Rows whose positive class wins; an exact 0.5/0.5 tie counts as positive."""
    s = np.flatnonzero(probs.p_start[:, 1] >= probs.p_start[:, 0])
    e = np.flatnonzero(probs.p_end[:, 1] >= probs.p_end[:, 0])
    return CandidateIndices(frozenset(s.tolist()), frozenset(e.tolist()))


def candidate_pairs(i_start, i_end, max_span_len: int = DEFAULT_MAX_SPAN_LEN) -> list[tuple[int, int]]:
    return [(i, j) for i in sorted(i_start) for j in sorted(i_end) if i <= j and j - i < max_span_len]


def match_logits(H: np.ndarray, starts: np.ndarray, ends: np.ndarray, params: dict) -> np.ndarray:
    d = H.shape[-1]
    m = params["head.m"]
    return H[starts] @ m[:d] + H[ends] @ m[d:] + params["head.mb"][0]


def match_spans(H_context: np.ndarray, i_start, i_end, params: dict,
                max_span_len: int = DEFAULT_MAX_SPAN_LEN) -> MatchPrediction:
    pairs = candidate_pairs(i_start, i_end, max_span_len)
    if not pairs:
        return MatchPrediction(())
    arr = np.array(pairs, dtype=np.int64)
    probs = sigmoid(match_logits(H_context, arr[:, 0], arr[:, 1], params))
    return MatchPrediction(tuple((i, j, float(p)) for (i, j), p in zip(pairs, probs)))


def decode_answers(match: MatchPrediction, tau: float = DEFAULT_TAU) -> list[tuple[int, int]]:
    """Per start index keep the best-scoring end with probability >= tau (smaller end on ties)."""
    best: dict[int, tuple[float, int]] = {}
    for i, j, p in match.pairs:
        if p < tau:
            continue
        cur = best.get(i)
        if cur is None or p > cur[0] or (p == cur[0] and j < cur[1]):
            best[i] = (p, j)
    return sorted((i, j) for i, (_, j) in best.items())


def training_pairs(gold_spans, i_start, i_end, max_span_len: int, rng: np.random.Generator | None):
    """Pair population for the match loss.

    All (gold start, gold end) combinations within the length bound, labeled
    by gold membership, plus at most as many negatives sampled from
    predicted candidate pairs that are not gold.
    """
    gold = set(map(tuple, gold_spans))
    starts = sorted({s for s, _ in gold})
    ends = sorted({e for _, e in gold})
    pairs = [(i, j) for i in starts for j in ends if i <= j and j - i < max_span_len]
    labels = [1.0 if (i, j) in gold else 0.0 for i, j in pairs]
    taken = set(pairs)
    pool = [p for p in candidate_pairs(i_start, i_end, max_span_len) if p not in gold and p not in taken]
    k = min(len(pairs), len(pool))
    if k and rng is not None:
        chosen = rng.choice(len(pool), size=k, replace=False)
        for idx in sorted(chosen.tolist()):
            pairs.append(pool[idx])
            labels.append(0.0)
    elif k:
        pairs.extend(pool[:k])
        labels.extend([0.0] * k)
    return pairs, np.array(labels)


def ce_rows(probs: np.ndarray, y: np.ndarray) -> float:
    """Mean two-class cross-entropy with probability clamping."""
    if probs.shape[0] != len(y):
        raise ValueError(f"gold length {len(y)} != {probs.shape[0]} rows")
    if len(y) == 0:
        return 0.0
    picked = probs[np.arange(len(y)), np.asarray(y, dtype=np.int64)]
    return float(-np.log(np.maximum(picked, PROB_CLAMP)).mean())


def bce(p: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return 0.0
    p = np.asarray(p, dtype=float)
    terms = y * np.log(np.maximum(p, PROB_CLAMP)) + (1 - y) * np.log(np.maximum(1 - p, PROB_CLAMP))
    return float(-terms.mean())


def compute_loss(probs: SpanProbabilities, match_probs, match_labels, gold,
                 weights: LossWeights = LossWeights()) -> LossReport:
    """Loss values for one instance.

    ``match_probs``/``match_labels`` are aligned over the training pair
    population; ``gold`` is a ``GoldSpanLabels``.
    """
    n = probs.p_start.shape[0]
    if len(gold.y_start) != n or len(gold.y_end) != n:
        raise ValueError(f"gold vectors of length {len(gold.y_start)} for {n} context tokens")
    l_start = ce_rows(probs.p_start, gold.y_start)
    l_end = ce_rows(probs.p_end, gold.y_end)
    l_span = bce(np.asarray(match_probs, dtype=float), np.asarray(match_labels, dtype=float))
    total = weights.alpha * l_start + weights.beta * l_end + weights.gamma * l_span
    return LossReport(l_start, l_end, l_span, total)


def ce_grad_logits(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d(mean CE)/d(logits) for two-class rows; zero where the clamp is active."""
    p = softmax2(logits)
    n = len(y)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), y] = 1.0
    g = (p - onehot) / n
    clamped = p[np.arange(n), y] <= PROB_CLAMP
    g[clamped] = 0.0
    return g


def bce_grad_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = sigmoid(z)
    g = (p - y) / len(y)
    g[(y == 1) & (p <= PROB_CLAMP)] = 0.0
    g[(y == 0) & (1 - p <= PROB_CLAMP)] = 0.0
    return g
