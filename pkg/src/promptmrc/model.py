"""Encoder + span head as one trainable model, with batching and checkpoint I/O."""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import encoder as enc
from . import span_head as sh
from .instances import MrcInstance, Vocab

FORMAT_VERSION = 1
_FIXED_ZIP_TIME = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


@dataclass
class Batch:
    ids: np.ndarray
    seg: np.ndarray
    mask: np.ndarray
    offsets: list[int]
    lengths: list[int]
    gold: list[list[tuple[int, int]]]


def collate(instances: Sequence[MrcInstance], vocab: Vocab) -> Batch:
    seqs = [inst.input_ids(vocab) for inst in instances]
    T = max(len(s) for s in seqs)
    B = len(seqs)
    ids = np.zeros((B, T), dtype=np.int64)
    seg = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T), dtype=bool)
    for b, (inst, s) in enumerate(zip(instances, seqs)):
        ids[b, :len(s)] = s
        seg[b, :len(s)] = inst.segment_ids()
        mask[b, :len(s)] = True
    return Batch(ids, seg, mask, [i.context_offset for i in instances], [i.n for i in instances],
                 [list(i.answer_spans) for i in instances])


@dataclass
class MrcModel:
    config: enc.EncoderConfig
    params: dict
    vocab: Vocab
    schema: dict = field(default_factory=dict)
    tau: float = sh.DEFAULT_TAU
    max_span_len: int = sh.DEFAULT_MAX_SPAN_LEN
    metadata: dict = field(default_factory=dict)

    @classmethod
    def create(cls, vocab: Vocab, schema: dict | None = None, **config_kw) -> "MrcModel":
        config = enc.EncoderConfig(vocab_size=len(vocab), **config_kw)
        rng = np.random.default_rng(config.seed)
        params = enc.init_params(config, rng)
        params.update(sh.init_head(config.d, rng))
        return cls(config, params, vocab, schema or {})

    def copy(self) -> "MrcModel":
        return replace(self, params={k: v.copy() for k, v in self.params.items()},
                       metadata=json.loads(json.dumps(self.metadata)))

    # ---------------------------------------------------------------- training

    def loss_and_grads(self, batch: Batch, weights: sh.LossWeights = sh.LossWeights(),
                       rng: np.random.Generator | None = None, train_mode: bool = False,
                       pair_sets: list | None = None, need_grads: bool = True):
        """Mean per-instance loss over the batch and its gradients.

        ``pair_sets`` fixes the match-loss pair population per instance
        (list of ``(pairs, labels)``); otherwise it is drawn from the
        current predictions using ``rng``.
        """
        params = self.params
        d = self.config.d
        H, cache = enc.forward(params, self.config, batch.ids, batch.seg, batch.mask,
                               rng=rng, train_mode=train_mode)
        ls, le, head_cache = sh.start_end_logits(H, params)
        B = H.shape[0]
        dls = np.zeros_like(ls)
        dle = np.zeros_like(le)
        dH = np.zeros_like(H)
        m = params["head.m"]
        dm = np.zeros_like(m)
        dmb = 0.0
        totals = np.zeros(3)
        used_pairs = []
        for b in range(B):
            lo, n = batch.offsets[b], batch.lengths[b]
            ctx = slice(lo, lo + n)
            gold = batch.gold[b]
            ys = np.zeros(n, dtype=np.int64)
            ye = np.zeros(n, dtype=np.int64)
            for s, e in gold:
                ys[s] = 1
                ye[e] = 1
            ps, pe = sh.softmax2(ls[b, ctx]), sh.softmax2(le[b, ctx])
            totals[0] += sh.ce_rows(ps, ys)
            totals[1] += sh.ce_rows(pe, ye)
            if pair_sets is not None:
                pairs, labels = pair_sets[b]
            else:
                cand = sh.candidate_indices(sh.SpanProbabilities(ps, pe))
                pairs, labels = sh.training_pairs(gold, cand.i_start, cand.i_end, self.max_span_len, rng)
            used_pairs.append((pairs, labels))
            if pairs:
                arr = np.asarray(pairs, dtype=np.int64)
                Hc = H[b, ctx]
                z = sh.match_logits(Hc, arr[:, 0], arr[:, 1], params)
                totals[2] += sh.bce(sh.sigmoid(z), labels)
                if need_grads and weights.gamma:
                    dz = sh.bce_grad_logits(z, labels) * (weights.gamma / B)
                    np.add.at(dH[b], lo + arr[:, 0], dz[:, None] * m[None, :d])
                    np.add.at(dH[b], lo + arr[:, 1], dz[:, None] * m[None, d:])
                    dm[:d] += dz @ Hc[arr[:, 0]]
                    dm[d:] += dz @ Hc[arr[:, 1]]
                    dmb += dz.sum()
            if need_grads:
                if weights.alpha:
                    dls[b, ctx] = sh.ce_grad_logits(ls[b, ctx], ys) * (weights.alpha / B)
                if weights.beta:
                    dle[b, ctx] = sh.ce_grad_logits(le[b, ctx], ye) * (weights.beta / B)
        means = totals / B
        l_start, l_end, l_span = (float(x) for x in means)
        report = sh.LossReport(l_start, l_end, l_span,
                               weights.alpha * l_start + weights.beta * l_end + weights.gamma * l_span)
        if not need_grads:
            return report, None, used_pairs

        grads = {}
        for side, dl in (("s", dls), ("e", dle)):
            u = head_cache["us" if side == "s" else "ue"].reshape(-1, d)
            dl2 = dl.reshape(-1, 2)
            grads[f"head.v{side}"] = u.T @ dl2
            grads[f"head.c{side}"] = dl2.sum(axis=0)
            du = dl2 @ params[f"head.v{side}"].T
            grads[f"head.w{side}"] = H.reshape(-1, d).T @ du
            grads[f"head.b{side}"] = du.sum(axis=0)
            dH += (du @ params[f"head.w{side}"].T).reshape(H.shape)
        grads["head.m"] = dm
        grads["head.mb"] = np.array([dmb])
        grads.update(enc.backward(params, self.config, cache, dH))
        return report, grads, used_pairs

    def loss_value(self, batch: Batch, weights: sh.LossWeights, pair_sets: list) -> float:
        report, _, _ = self.loss_and_grads(batch, weights, pair_sets=pair_sets, need_grads=False)
        return report.l_total

    # --------------------------------------------------------------- inference

    def encode_contexts(self, instances: Sequence[MrcInstance], batch_size: int = 32):
        """Yield ``(instance, H_context)`` with dropout disabled."""
        for lo in range(0, len(instances), batch_size):
            chunk = instances[lo:lo + batch_size]
            batch = collate(chunk, self.vocab)
            H, _ = enc.forward(self.params, self.config, batch.ids, batch.seg, batch.mask)
            for b, inst in enumerate(chunk):
                off = batch.offsets[b]
                yield inst, H[b, off:off + batch.lengths[b]]

    def predict_spans(self, instances: Sequence[MrcInstance], tau: float | None = None,
                      batch_size: int = 32) -> list[list[tuple[int, int]]]:
        tau = self.tau if tau is None else tau
        out = []
        for inst, Hc in self.encode_contexts(instances, batch_size):
            if inst.n == 0:
                out.append([])
                continue
            probs = sh.predict_start_end(Hc, self.params)
            cand = sh.candidate_indices(probs)
            match = sh.match_spans(Hc, cand.i_start, cand.i_end, self.params, self.max_span_len)
            out.append(sh.decode_answers(match, tau))
        return out

    # -------------------------------------------------------------- checkpoint

    def meta_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "vocab": self.vocab.to_list(),
            "schema": self.schema,
            "tau": self.tau,
            "max_span_len": self.max_span_len,
            "metadata": self.metadata,
        }

    def save(self, path: "str | Path") -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            info = zipfile.ZipInfo("meta.json", date_time=_FIXED_ZIP_TIME)
            zf.writestr(info, json.dumps(self.meta_dict(), sort_keys=True, indent=1))
            for name in sorted(self.params):
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.ascontiguousarray(self.params[name]), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(f"params/{name}.npy", date_time=_FIXED_ZIP_TIME), buf.getvalue())

    @classmethod
    def load(cls, path: "str | Path", expected_config: enc.EncoderConfig | None = None) -> "MrcModel":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        try:
            zf = zipfile.ZipFile(path)
        except zipfile.BadZipFile as exc:
            raise CheckpointError(f"{path}: not a checkpoint ({exc})")
        with zf:
            try:
                meta = json.loads(zf.read("meta.json"))
            except (KeyError, ValueError) as exc:
                raise CheckpointError(f"{path}: unreadable metadata ({exc})")
            if meta.get("format_version") != FORMAT_VERSION:
                raise CheckpointError(f"unsupported checkpoint format {meta.get('format_version')}")
            config = enc.EncoderConfig(**meta["config"])
            if expected_config is not None and expected_config != config:
                raise CheckpointError(f"checkpoint config {config} does not match expected {expected_config}")
            params = {}
            for name in zf.namelist():
                if name.startswith("params/"):
                    params[name[len("params/"):-len(".npy")]] = np.lib.format.read_array(
                        io.BytesIO(zf.read(name)), allow_pickle=False)
        shapes = enc.param_shapes(config)
        for name, shape in shapes.items():
            if name not in params or params[name].shape != shape:
                raise CheckpointError(f"parameter {name} missing or mis-shaped for config")
        for name in sh.HEAD_NAMES:
            if name not in params:
                raise CheckpointError(f"span-head parameter {name} missing")
        return cls(config, params, Vocab.from_list(meta["vocab"]), meta.get("schema", {}),
                   meta.get("tau", sh.DEFAULT_TAU), meta.get("max_span_len", sh.DEFAULT_MAX_SPAN_LEN),
                   meta.get("metadata", {}))
