"""Row-wise numeric kernels used by the encoder.

Two interchangeable implementations exist: numba-compiled loops and plain
numpy. The numba path is used when numba imports and the environment
variable ``PROMPTMRC_NUMBA`` is not ``0``. ``set_backend`` switches at
runtime (the encoder looks kernels up through this module on every call).

All kernels operate on C-contiguous 2-D float64 arrays (rows x features).
"""
from __future__ import annotations

import math
import os

import numpy as np

LN_EPS = 1e-12
_GELU_C = math.sqrt(2.0 / math.pi)

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None
    HAVE_NUMBA = False


# ---------------------------------------------------------------- numpy path

def _np_layernorm_forward(x, gain, bias):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


def _np_layernorm_backward(dy, xhat, rstd, gain):
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[:, None]
    return dx, dgain, dbias


def _np_gelu_forward(x):
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))


def _np_gelu_backward(dy, x):
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def _np_softmax_forward(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _np_softmax_backward(dy, p):
    return p * (dy - (dy * p).sum(axis=1, keepdims=True))


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:
    @numba.njit(cache=True)
    def _nb_layernorm_forward(x, gain, bias):
        rows, cols = x.shape
        y = np.empty_like(x)
        xhat = np.empty_like(x)
        rstd = np.empty(rows)
        for r in range(rows):
            mu = 0.0
            for c in range(cols):
                mu += x[r, c]
            mu /= cols
            var = 0.0
            for c in range(cols):
                d = x[r, c] - mu
                var += d * d
            var /= cols
            s = 1.0 / math.sqrt(var + LN_EPS)
            rstd[r] = s
            for c in range(cols):
                h = (x[r, c] - mu) * s
                xhat[r, c] = h
                y[r, c] = h * gain[c] + bias[c]
        return y, xhat, rstd

    @numba.njit(cache=True)
    def _nb_layernorm_backward(dy, xhat, rstd, gain):
        rows, cols = dy.shape
        dx = np.empty_like(dy)
        dgain = np.zeros(cols)
        dbias = np.zeros(cols)
        for r in range(rows):
            m1 = 0.0
            m2 = 0.0
            for c in range(cols):
                g = dy[r, c] * gain[c]
                m1 += g
                m2 += g * xhat[r, c]
                dgain[c] += dy[r, c] * xhat[r, c]
                dbias[c] += dy[r, c]
            m1 /= cols
            m2 /= cols
            for c in range(cols):
                dx[r, c] = (dy[r, c] * gain[c] - m1 - xhat[r, c] * m2) * rstd[r]
        return dx, dgain, dbias

    @numba.njit(cache=True)
    def _nb_gelu_forward(x):
        out = np.empty_like(x)
        rows, cols = x.shape
        for r in range(rows):
            for c in range(cols):
                v = x[r, c]
                out[r, c] = 0.5 * v * (1.0 + math.tanh(_GELU_C * (v + 0.044715 * v * v * v)))
        return out

    @numba.njit(cache=True)
    def _nb_gelu_backward(dy, x):
        out = np.empty_like(x)
        rows, cols = x.shape
        for r in range(rows):
            for c in range(cols):
                v = x[r, c]
                t = math.tanh(_GELU_C * (v + 0.044715 * v * v * v))
                dinner = _GELU_C * (1.0 + 3 * 0.044715 * v * v)
                out[r, c] = dy[r, c] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner)
        return out

    @numba.njit(cache=True)
    def _nb_softmax_forward(x):
        rows, cols = x.shape
        out = np.empty_like(x)
        for r in range(rows):
            mx = x[r, 0]
            for c in range(1, cols):
                if x[r, c] > mx:
                    mx = x[r, c]
            tot = 0.0
            for c in range(cols):
                e = math.exp(x[r, c] - mx)
                out[r, c] = e
                tot += e
            for c in range(cols):
                out[r, c] /= tot
        return out

    @numba.njit(cache=True)
    def _nb_softmax_backward(dy, p):
        rows, cols = dy.shape
        out = np.empty_like(dy)
        for r in range(rows):
            dot = 0.0
            for c in range(cols):
                dot += dy[r, c] * p[r, c]
            for c in range(cols):
                out[r, c] = p[r, c] * (dy[r, c] - dot)
        return out


_NAMES = ("layernorm_forward", "layernorm_backward", "gelu_forward", "gelu_backward",
          "softmax_forward", "softmax_backward")

BACKEND = ""


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"`` kernels; returns the previous backend."""
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    prefix = "_nb_" if name == "numba" else "_np_"
    g = globals()
    for fn in _NAMES:
        g[fn] = g[prefix + fn]
    previous, BACKEND = BACKEND, name
    return previous


def _default_backend() -> str:
    flag = os.environ.get("PROMPTMRC_NUMBA", "1").strip().lower()
    if HAVE_NUMBA and flag not in ("0", "false", "no", "off"):
        return "numba"
    return "numpy"


set_backend(_default_backend())
