"""Central finite-difference check of the full model loss."""
from __future__ import annotations

import numpy as np

from . import span_head as sh
from .instances import Vocab
from .model import Batch, MrcModel


def tiny_problem(seed: int = 3, n: int = 6, jitter: float = 0.3):
    """Model (d=8, one layer) with perturbed weights and a batch of one ``n``-token context."""
    vocab = Vocab([f"w{i}" for i in range(20)])
    model = MrcModel.create(vocab, d=8, num_layers=1, num_heads=2, ffn_size=16, max_seq_len=16,
                            dropout_rate=0.0, seed=seed)
    rng = np.random.default_rng(seed)
    # larger-than-init weights keep gradients well above round-off
    for k in model.params:
        model.params[k] = model.params[k] + rng.normal(0.0, jitter, model.params[k].shape)
    q = 2
    ids = np.concatenate([[2], rng.integers(4, 24, size=q), [3], rng.integers(4, 24, size=n), [3]])[None]
    seg = np.zeros_like(ids)
    seg[:, q + 2:] = 1
    gold = [(1, 3), (2, 2)] if n > 3 else [(0, n - 1)]
    batch = Batch(ids, seg, np.ones_like(ids, dtype=bool), [q + 2], [n], [gold])
    extra = [(0, n - 1), (1, 2)] if n > 3 else []
    pairs = gold + [p for p in extra if p not in gold]
    labels = np.array([1.0] * len(gold) + [0.0] * (len(pairs) - len(gold)))
    return model, batch, [(pairs, labels)]


def max_relative_error(model: MrcModel, batch: Batch, pair_sets, weights=sh.LossWeights(),
                       step: float = 1e-5, samples: int = 64, floor: float = 1e-6, seed: int = 0):
    """Worst ``|analytic - numeric| / max(|analytic|, |numeric|, floor)`` over sampled entries.

    Every parameter tensor is visited; tensors with more than ``samples``
    entries are subsampled. Returns ``(error, tensor_name)``.
    """
    rng = np.random.default_rng(seed)
    _, grads, _ = model.loss_and_grads(batch, weights, pair_sets=pair_sets)
    worst, where = 0.0, ""
    for name, p in model.params.items():
        flat = p.reshape(-1)
        idx = range(flat.size) if flat.size <= samples else rng.choice(flat.size, samples, replace=False)
        g = grads[name].reshape(-1)
        for i in idx:
            old = flat[i]
            flat[i] = old + step
            up = model.loss_value(batch, weights, pair_sets)
            flat[i] = old - step
            down = model.loss_value(batch, weights, pair_sets)
            flat[i] = old
            num = (up - down) / (2 * step)
            err = abs(g[i] - num) / max(abs(g[i]), abs(num), floor)
            if err > worst:
                worst, where = err, name
    return worst, where
