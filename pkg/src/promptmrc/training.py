"""Optimization loop, document-level k-fold splits and grid search."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import span_head as sh
from .corpus import Document, Schema
from .instances import MrcInstance, Vocab, build_concept_instances, build_relation_instances, gold_triggers
from .metrics import PRF, evaluate_concepts
from .model import MrcModel, collate

logger = logging.getLogger(__name__)

DEFAULT_GRID_LR = (1e-6, 1e-5, 3e-5)
DEFAULT_GRID_BS = (1, 4, 8)
LOG_HEADER = "epoch\tl_start\tl_end\tl_span\tl_total\tval_f1"


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 8
    max_epochs: int = 50
    patience: int = 5
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    d: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_size: int = 256
    dropout_rate: float = 0.1
    max_seq_len: int = 128
    tau: float = sh.DEFAULT_TAU
    max_span_len: int = sh.DEFAULT_MAX_SPAN_LEN
    grid_learning_rates: tuple = DEFAULT_GRID_LR
    grid_batch_sizes: tuple = DEFAULT_GRID_BS
    folds: int = 5

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.max_epochs < 0 or self.learning_rate < 0:
            raise ValueError("batch_size >= 1, max_epochs >= 0 and learning_rate >= 0 required")

    @property
    def loss_weights(self) -> sh.LossWeights:
        return sh.LossWeights(self.alpha, self.beta, self.gamma)

    def encoder_kwargs(self) -> dict:
        return {"d": self.d, "num_layers": self.num_layers, "num_heads": self.num_heads,
                "ffn_size": self.ffn_size, "max_seq_len": self.max_seq_len,
                "dropout_rate": self.dropout_rate, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("grid_learning_rates", "grid_batch_sizes"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["grid_learning_rates"] = list(self.grid_learning_rates)
        out["grid_batch_sizes"] = list(self.grid_batch_sizes)
        return out


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name in sorted(grads):
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params: dict, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for name in sorted(grads):
            params[name] -= self.lr * grads[name]


def span_f1(model: MrcModel, instances: Sequence[MrcInstance]) -> float:
    """Strict micro F1 of decoded token spans against instance answers."""
    prf = PRF()
    for inst, pred in zip(instances, model.predict_spans(instances)):
        gold = set(inst.answer_spans)
        hit = len(gold & set(pred))
        prf.add(hit, len(set(pred)) - hit, len(gold) - hit)
    return prf.f1


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_model(instances: Sequence[MrcInstance], config: TrainConfig = TrainConfig(),
                val_instances: Sequence[MrcInstance] | None = None, vocab: Vocab | None = None,
                schema: Schema | None = None, log: Callable[[str], None] | None = None,
                time_budget: float | None = None) -> MrcModel:
    """Mini-batch training; returns the best model by (validation span F1, -validation loss).

    Without ``val_instances`` the training instances are used for tracking.
    Early stopping fires after ``patience`` epochs without improvement.
    """
    if not instances:
        raise ValueError("train_model needs at least one instance")
    instances = list(instances)
    vocab = vocab if vocab is not None else Vocab.build(instances)
    model = MrcModel.create(vocab, schema.fingerprint() if schema is not None else {},
                            **config.encoder_kwargs())
    model.tau, model.max_span_len = config.tau, config.max_span_len
    rng = np.random.default_rng(config.seed + 1)
    opt = (Adam(model.params, config.learning_rate, config.beta1, config.beta2, config.eps)
           if config.optimizer == "adam" else SGD(model.params, config.learning_rate))
    weights = config.loss_weights
    tracked = list(val_instances) if val_instances else instances
    tracked_batches = [collate(tracked[i:i + 32], vocab) for i in range(0, len(tracked), 32)]
    history = []
    best_key, best = None, model.copy()
    stale = 0
    started = time.perf_counter()
    if log:
        log(LOG_HEADER)
    for epoch in range(1, config.max_epochs + 1):
        sums = np.zeros(4)
        count = 0
        for idx in _batches(len(instances), config.batch_size, rng):
            batch = collate([instances[i] for i in idx], vocab)
            report, grads, _ = model.loss_and_grads(batch, weights, rng=rng, train_mode=True)
            if not math.isfinite(report.l_total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}: {report}")
            opt.step(model.params, grads)
            sums += np.array([report.l_start, report.l_end, report.l_span, report.l_total]) * len(idx)
            count += len(idx)
        means = sums / count
        val_loss = 0.0
        for b in tracked_batches:
            r, _, _ = model.loss_and_grads(b, weights, need_grads=False)
            val_loss += r.l_total * len(b.offsets)
        val_loss /= len(tracked)
        f1 = span_f1(model, tracked)
        row = {"epoch": epoch, "l_start": means[0], "l_end": means[1], "l_span": means[2],
               "l_total": means[3], "val_f1": f1, "val_loss": val_loss}
        history.append(row)
        if log:
            log(f"{epoch}\t{means[0]:.6f}\t{means[1]:.6f}\t{means[2]:.6f}\t{means[3]:.6f}\t{f1:.4f}")
        key = (round(f1, 12), -val_loss)
        if best_key is None or key > best_key:
            best_key, best, stale = key, model.copy(), 0
            best.metadata = {"epoch": epoch}
        else:
            stale += 1
            if stale >= config.patience:
                break
        if time_budget is not None and time.perf_counter() - started > time_budget:
            logger.warning("time budget exhausted after epoch %d", epoch)
            break
    if best_key is None:
        best.metadata = {"epoch": 0}
    best.metadata.update({"history": history, "train_config": config.to_dict()})
    return best


# ------------------------------------------------------------------ data prep

def task_instances(docs: Sequence[Document], schema: Schema, task: str, strategy="natural",
                   max_seq_len: int = 128) -> list[MrcInstance]:
    """Training instances for ``concept`` (all categories), ``trigger`` or ``relation`` (gold triggers)."""
    out: list[MrcInstance] = []
    for doc in docs:
        if task == "concept":
            out.extend(build_concept_instances(doc, schema, strategy, max_seq_len=max_seq_len))
        elif task == "trigger":
            out.extend(build_concept_instances(doc, schema, strategy, list(schema.trigger_categories),
                                               max_seq_len=max_seq_len))
        elif task == "relation":
            out.extend(build_relation_instances(doc, gold_triggers(doc, schema), schema, strategy,
                                                max_seq_len=max_seq_len))
        else:
            raise ValueError(f"unknown task {task!r}")
    return out


def fold_split(doc_ids: Sequence[str], k: int = 5, seed: int = 0) -> list[list[str]]:
    """Shuffle documents with a seeded RNG, then deal them round-robin into ``k`` folds."""
    ids = sorted(doc_ids)
    if len(ids) < k:
        raise ValueError(f"need at least {k} documents for {k}-fold cross-validation, got {len(ids)}")
    order = np.random.default_rng(seed).permutation(len(ids))
    folds: list[list[str]] = [[] for _ in range(k)]
    for pos, idx in enumerate(order):
        folds[pos % k].append(ids[idx])
    return [sorted(f) for f in folds]


@dataclass
class CrossValResult:
    best: TrainConfig
    table: list = field(default_factory=list)  # rows: lr, batch, fold, f1

    def cell_means(self) -> dict:
        cells: dict = {}
        for row in self.table:
            cells.setdefault((row["learning_rate"], row["batch_size"]), []).append(row["f1"])
        return {k: float(np.mean(v)) for k, v in cells.items()}

    def to_tsv(self) -> str:
        lines = ["learning_rate\tbatch_size\tfold\tstrict_f1"]
        for row in self.table:
            lines.append(f"{row['learning_rate']:g}\t{row['batch_size']}\t{row['fold']}\t{row['f1']:.6f}")
        for (lr, bs), mean in sorted(self.cell_means().items()):
            lines.append(f"{lr:g}\t{bs}\tmean\t{mean:.6f}")
        lines.append(f"{self.best.learning_rate:g}\t{self.best.batch_size}\tselected\t"
                     f"{self.cell_means()[(self.best.learning_rate, self.best.batch_size)]:.6f}")
        return "\n".join(lines) + "\n"


def select_cell(means: dict) -> tuple[float, int]:
    """Highest mean F1; ties go to the larger learning rate, then the larger batch."""
    return max(means, key=lambda cell: (means[cell], cell[0], cell[1]))


def _fold_run(args):
    docs, schema, config, strategy, held_ids, categories = args
    from .pipeline import predict_concepts
    train_docs = [d for d in docs if d.doc_id not in held_ids]
    test_docs = [d for d in docs if d.doc_id in held_ids]
    insts = task_instances(train_docs, schema, "concept", strategy, config.max_seq_len)
    model = train_model(insts, config, schema=schema)
    preds = [Document(d.doc_id, d.text, tuple(predict_concepts(model, d, schema, strategy)))
             for d in test_docs]
    return evaluate_concepts(test_docs, preds, "strict", categories).micro.f1


def cross_validate(docs: Sequence[Document], schema: Schema, config: TrainConfig = TrainConfig(),
                   strategy="natural", jobs: int = 1,
                   log: Callable[[str], None] | None = None) -> CrossValResult:
    """Grid search over learning rate x batch size with document-level k-fold CV.

    Selection uses the mean held-out micro strict concept F1.
    """
    folds = fold_split([d.doc_id for d in docs], config.folds, config.seed)
    for i, a in enumerate(folds):
        for b in folds[i + 1:]:
            assert not set(a) & set(b), "fold leakage"
    cells = [(lr, bs) for lr in config.grid_learning_rates for bs in config.grid_batch_sizes]
    tasks = []
    for lr, bs in cells:
        cell_cfg = replace(config, learning_rate=lr, batch_size=bs)
        for f, held in enumerate(folds):
            tasks.append(((lr, bs, f), (list(docs), schema, cell_cfg, strategy, set(held),
                                        list(schema.concept_categories))))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(_fold_run, [t[1] for t in tasks]))
    else:
        scores = [_fold_run(t[1]) for t in tasks]
    table = []
    for ((lr, bs, f), _), score in zip(tasks, scores):
        table.append({"learning_rate": lr, "batch_size": bs, "fold": f, "f1": score})
        if log:
            log(f"{lr:g}\t{bs}\t{f}\t{score:.6f}")
    result = CrossValResult(config, table)
    lr, bs = select_cell(result.cell_means())
    result.best = replace(config, learning_rate=lr, batch_size=bs)
    return result
