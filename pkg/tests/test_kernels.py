import numpy as np
import pytest

from promptmrc import kernels as K

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture
def arrays():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(7, 12)) * 3
    return rng, x, rng.normal(size=12), rng.normal(size=12), rng.normal(size=(7, 12))


@pytest.mark.parametrize("name", ["gelu", "softmax"])
def test_elementwise_backends_agree(arrays, name):
    _, x, _, _, dy = arrays
    fwd_np, fwd_nb = getattr(K, f"_np_{name}_forward"), getattr(K, f"_nb_{name}_forward")
    y = fwd_np(x)
    np.testing.assert_allclose(fwd_nb(x), y, rtol=1e-12, atol=1e-14)
    second = x if name == "gelu" else y
    np.testing.assert_allclose(getattr(K, f"_nb_{name}_backward")(dy, second),
                               getattr(K, f"_np_{name}_backward")(dy, second), rtol=1e-11, atol=1e-13)


def test_layernorm_backends_agree(arrays):
    _, x, g, b, dy = arrays
    a = K._np_layernorm_forward(x, g, b)
    c = K._nb_layernorm_forward(x, g, b)
    for u, v in zip(a, c):
        np.testing.assert_allclose(u, v, rtol=1e-11, atol=1e-13)
    for u, v in zip(K._np_layernorm_backward(dy, a[1], a[2], g), K._nb_layernorm_backward(dy, a[1], a[2], g)):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-12)


def test_softmax_rows_sum_to_one_under_mask(arrays):
    _, x, _, _, _ = arrays
    x = x.copy()
    x[:, :4] = -1e9
    for fn in (K._np_softmax_forward, K._nb_softmax_forward):
        p = fn(x)
        np.testing.assert_allclose(p.sum(axis=1), 1.0)
        assert np.all(p[:, :4] == 0.0)


def test_set_backend_switches_and_restores():
    prev = K.set_backend("numpy")
    try:
        assert K.layernorm_forward is K._np_layernorm_forward
        K.set_backend("numba")
        assert K.gelu_forward is K._nb_gelu_forward
        with pytest.raises(ValueError):
            K.set_backend("cuda")
    finally:
        K.set_backend(prev)
