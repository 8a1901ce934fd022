"""Post-norm transformer encoder in numpy with hand-derived backward pass.

Parameters live in a flat ``dict[str, np.ndarray]`` so the optimizer and the
checkpoint writer can treat them uniformly. Layer ``l`` tensors are named
``"l{l}.<name>"``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels as K

MASK_NEG = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_size: int = 256
    max_seq_len: int = 128
    dropout_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "d", "num_layers", "num_heads", "ffn_size", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d % self.num_heads:
            raise ValueError(f"d={self.d} not divisible by num_heads={self.num_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


_LAYER_SHAPES = {
    "wq": ("d", "d"), "bq": ("d",), "wk": ("d", "d"), "bk": ("d",),
    "wv": ("d", "d"), "bv": ("d",), "wo": ("d", "d"), "bo": ("d",),
    "ln1_g": ("d",), "ln1_b": ("d",),
    "w1": ("d", "f"), "b1": ("f",), "w2": ("f", "d"), "b2": ("d",),
    "ln2_g": ("d",), "ln2_b": ("d",),
}


def param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    dims = {"d": config.d, "f": config.ffn_size}
    shapes = {
        "tok_emb": (config.vocab_size, config.d),
        "pos_emb": (config.max_seq_len, config.d),
        "seg_emb": (2, config.d),
        "emb_ln_g": (config.d,),
        "emb_ln_b": (config.d,),
    }
    for layer in range(config.num_layers):
        for name, dim_names in _LAYER_SHAPES.items():
            shapes[f"l{layer}.{name}"] = tuple(dims[x] for x in dim_names)
    return shapes


def init_params(config: EncoderConfig, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """N(0, 0.02) weights and embeddings, zero biases, unit layer-norm gains."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.split(".")[-1]
        if leaf.endswith("_g"):
            params[name] = np.ones(shape)
        elif leaf.startswith("b") or leaf.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, 0.02, size=shape)
    return params


def _layernorm(x, g, b):
    shape = x.shape
    y, xhat, rstd = K.layernorm_forward(np.ascontiguousarray(x.reshape(-1, shape[-1])), g, b)
    return y.reshape(shape), (xhat, rstd, g, shape)


def _layernorm_back(dy, cache):
    xhat, rstd, g, shape = cache
    dx, dg, db = K.layernorm_backward(np.ascontiguousarray(dy.reshape(-1, shape[-1])), xhat, rstd, g)
    return dx.reshape(shape), dg, db


def _dropout(x, rate, rng):
    if rng is None or rate <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


def forward(params: dict, config: EncoderConfig, input_ids: np.ndarray, segment_ids: np.ndarray,
            mask: np.ndarray | None = None, rng: np.random.Generator | None = None,
            train_mode: bool = False):
    """Encode a batch ``(B, T)`` of token ids; returns ``(H, cache)`` with ``H`` of shape ``(B, T, d)``.

    ``mask`` marks real (non-pad) positions. Dropout runs only when
    ``train_mode`` is set and an ``rng`` is supplied; the sampled masks are
    kept in the cache so that ``backward`` is exact.
    """
    ids = np.atleast_2d(input_ids)
    seg = np.atleast_2d(segment_ids)
    B, T = ids.shape
    if T > config.max_seq_len:
        raise ValueError(f"sequence length {T} exceeds max_seq_len {config.max_seq_len}")
    if ids.size and (ids.max() >= config.vocab_size or ids.min() < 0):
        raise ValueError("token id out of vocabulary range")
    if mask is None:
        mask = np.ones((B, T), dtype=bool)
    rate = config.dropout_rate if train_mode else 0.0
    drop_rng = rng if train_mode else None
    h, dh = config.num_heads, config.d // config.num_heads
    scale = 1.0 / np.sqrt(dh)
    key_bias = np.where(mask, 0.0, MASK_NEG)[:, None, None, :]

    x = params["tok_emb"][ids] + params["pos_emb"][:T][None] + params["seg_emb"][seg]
    x, ln0 = _layernorm(x, params["emb_ln_g"], params["emb_ln_b"])
    x, drop0 = _dropout(x, rate, drop_rng)
    cache = {"ids": ids, "seg": seg, "ln0": ln0, "drop0": drop0, "layers": []}

    for layer in range(config.num_layers):
        p = lambda n: params[f"l{layer}.{n}"]  # noqa: E731
        q = (x @ p("wq") + p("bq")).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
        k = (x @ p("wk") + p("bk")).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
        v = (x @ p("wv") + p("bv")).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale + key_bias
        attn = K.softmax_forward(np.ascontiguousarray(scores.reshape(-1, T))).reshape(B, h, T, T)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(B, T, -1)
        o = ctx @ p("wo") + p("bo")
        o, drop1 = _dropout(o, rate, drop_rng)
        x1, ln1 = _layernorm(x + o, p("ln1_g"), p("ln1_b"))
        pre = x1 @ p("w1") + p("b1")
        act = K.gelu_forward(np.ascontiguousarray(pre.reshape(-1, pre.shape[-1]))).reshape(pre.shape)
        f = act @ p("w2") + p("b2")
        f, drop2 = _dropout(f, rate, drop_rng)
        x2, ln2 = _layernorm(x1 + f, p("ln2_g"), p("ln2_b"))
        cache["layers"].append({
            "x": x, "q": q, "k": k, "v": v, "attn": attn, "ctx": ctx, "drop1": drop1,
            "ln1": ln1, "x1": x1, "pre": pre, "act": act, "drop2": drop2, "ln2": ln2,
        })
        x = x2
    return x, cache


def backward(params: dict, config: EncoderConfig, cache: dict, dH: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every encoder parameter, given ``dL/dH``."""
    grads = {name: np.zeros_like(val) for name, val in params.items() if not name.startswith("head.")}
    B, T, d = dH.shape
    h, dh = config.num_heads, d // config.num_heads
    scale = 1.0 / np.sqrt(dh)
    dx = dH
    for layer in reversed(range(config.num_layers)):
        c = cache["layers"][layer]
        pre_name = f"l{layer}."
        p = lambda n: params[pre_name + n]  # noqa: E731
        g = lambda n: grads[pre_name + n]  # noqa: E731

        dsum2, dg2, db2 = _layernorm_back(dx, c["ln2"])
        g("ln2_g")[...] += dg2
        g("ln2_b")[...] += db2
        dx1 = dsum2.copy()
        df = dsum2 if c["drop2"] is None else dsum2 * c["drop2"]
        act2d = c["act"].reshape(-1, c["act"].shape[-1])
        df2d = df.reshape(-1, d)
        g("w2")[...] += act2d.T @ df2d
        g("b2")[...] += df2d.sum(axis=0)
        dact = df2d @ p("w2").T
        dpre = K.gelu_backward(np.ascontiguousarray(dact), np.ascontiguousarray(c["pre"].reshape(dact.shape)))
        x1_2d = c["x1"].reshape(-1, d)
        g("w1")[...] += x1_2d.T @ dpre
        g("b1")[...] += dpre.sum(axis=0)
        dx1 += (dpre @ p("w1").T).reshape(B, T, d)

        dsum1, dg1, db1 = _layernorm_back(dx1, c["ln1"])
        g("ln1_g")[...] += dg1
        g("ln1_b")[...] += db1
        dx_in = dsum1.copy()
        do = dsum1 if c["drop1"] is None else dsum1 * c["drop1"]
        do2d = do.reshape(-1, d)
        g("wo")[...] += c["ctx"].reshape(-1, d).T @ do2d
        g("bo")[...] += do2d.sum(axis=0)
        dctx = (do2d @ p("wo").T).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
        attn, v, q, k = c["attn"], c["v"], c["q"], c["k"]
        dattn = dctx @ v.transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dctx
        dscores = K.softmax_backward(np.ascontiguousarray(dattn.reshape(-1, T)),
                                     np.ascontiguousarray(attn.reshape(-1, T))).reshape(B, h, T, T)
        dscores *= scale
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        x2d = c["x"].reshape(-1, d)
        for name_w, name_b, dproj in (("wq", "bq", dq), ("wk", "bk", dk), ("wv", "bv", dv)):
            dp2d = dproj.transpose(0, 2, 1, 3).reshape(-1, d)
            g(name_w)[...] += x2d.T @ dp2d
            g(name_b)[...] += dp2d.sum(axis=0)
            dx_in += (dp2d @ p(name_w).T).reshape(B, T, d)
        dx = dx_in

    if cache["drop0"] is not None:
        dx = dx * cache["drop0"]
    demb, dg0, db0 = _layernorm_back(dx, cache["ln0"])
    grads["emb_ln_g"] += dg0
    grads["emb_ln_b"] += db0
    np.add.at(grads["tok_emb"], cache["ids"].ravel(), demb.reshape(-1, d))
    grads["pos_emb"][:T] += demb.sum(axis=0)
    np.add.at(grads["seg_emb"], cache["seg"].ravel(), demb.reshape(-1, d))
    return grads


def count_params(config: EncoderConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(config).values()))
