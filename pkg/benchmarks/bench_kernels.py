"""Compare the numba and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--rows 4096] [--cols 64]

Times each kernel on a rows x cols array, then one training step (forward
and backward) of the default-size model on a batch of synthetic instances.
Numba compilation happens in a warm-up call and is excluded.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from promptmrc import kernels as K
from promptmrc.instances import Vocab
from promptmrc.model import MrcModel, collate
from promptmrc.synth import SyntheticCorpusSpec, generate_corpus, synthetic_schema
from promptmrc.training import TrainConfig, task_instances


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(rows, cols, rng):
    x = rng.normal(size=(rows, cols))
    dy = rng.normal(size=(rows, cols))
    g, b = rng.normal(size=cols), rng.normal(size=cols)
    _, xhat, rstd = K._np_layernorm_forward(x, g, b)
    p = K._np_softmax_forward(x)
    return {
        "layernorm_forward": lambda: K.layernorm_forward(x, g, b),
        "layernorm_backward": lambda: K.layernorm_backward(dy, xhat, rstd, g),
        "gelu_forward": lambda: K.gelu_forward(x),
        "gelu_backward": lambda: K.gelu_backward(dy, x),
        "softmax_forward": lambda: K.softmax_forward(x),
        "softmax_backward": lambda: K.softmax_backward(dy, p),
    }


def train_step_case():
    docs = generate_corpus(SyntheticCorpusSpec(num_documents=4, seed=0))
    insts = task_instances(docs, synthetic_schema(), "concept")[:8]
    vocab = Vocab.build(insts)
    model = MrcModel.create(vocab, **TrainConfig().encoder_kwargs())
    batch = collate(insts, vocab)
    rng = np.random.default_rng(0)
    return lambda: model.loss_and_grads(batch, rng=rng, train_mode=True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--cols", type=int, default=64)
    args = ap.parse_args(argv)
    backends = ["numpy"] + (["numba"] if K.HAVE_NUMBA else [])
    results: dict = {}
    previous = K.BACKEND
    try:
        for backend in backends:
            K.set_backend(backend)
            cases = kernel_cases(args.rows, args.cols, np.random.default_rng(0))
            cases["train_step (B=8, d=64, L=2)"] = train_step_case()
            for name, fn in cases.items():
                results.setdefault(name, {})[backend] = best_of(fn, args.repeat)
    finally:
        K.set_backend(previous)
    print(f"{'kernel':32s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, row in results.items():
        line = f"{name:32s}" + "".join(f"{row[b] * 1e3:10.3f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{row['numpy'] / row['numba']:11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
