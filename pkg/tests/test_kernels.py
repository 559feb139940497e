import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from shipprompt import kernels

py = kernels.using("python")
try:
    cy = kernels.using("compiled")
except ImportError:
    cy = None

needs_compiled = pytest.mark.skipif(cy is None, reason="compiled extension not built")
floats = st.floats(-20, 20, allow_nan=False, allow_infinity=False)


def matrices(max_rows=6, max_cols=9):
    return st.tuples(st.integers(1, max_rows), st.integers(1, max_cols)).flatmap(
        lambda s: arrays(np.float64, s, elements=floats))


def test_backend_name_is_known():
    assert kernels.BACKEND in ("compiled", "python")


@needs_compiled
@given(matrices())
@settings(max_examples=60, deadline=None)
def test_layernorm_backends_agree(x):
    rng = np.random.default_rng(x.size)
    g, b = rng.normal(size=x.shape[1]), rng.normal(size=x.shape[1])
    dy = rng.normal(size=x.shape)
    out_py, out_cy = py.layernorm_forward(x, g, b, 1e-5), cy.layernorm_forward(x, g, b, 1e-5)
    for a, c in zip(out_py, out_cy):
        np.testing.assert_allclose(np.asarray(c), a, rtol=1e-10, atol=1e-10)
    back_py = py.layernorm_backward(dy, out_py[1], out_py[2], g)
    back_cy = cy.layernorm_backward(dy, out_py[1], out_py[2], g)
    np.testing.assert_allclose(np.asarray(back_cy), back_py, rtol=1e-9, atol=1e-9)


@needs_compiled
@given(matrices(), st.booleans())
@settings(max_examples=60, deadline=None)
def test_softmax_backends_agree(s, causal):
    L = s.shape[1]
    s = np.tile(s, (1, 1))
    clen = L if causal else 0
    y_py, y_cy = py.softmax_forward(s, clen), np.asarray(cy.softmax_forward(s, clen))
    np.testing.assert_allclose(y_cy, y_py, rtol=1e-12, atol=1e-15)
    dy = np.cos(s)
    np.testing.assert_allclose(np.asarray(cy.softmax_backward(dy, y_py)), py.softmax_backward(dy, y_py),
                               rtol=1e-10, atol=1e-12)


@needs_compiled
@given(matrices())
@settings(max_examples=60, deadline=None)
def test_quick_gelu_backends_agree(x):
    y_py, s_py = py.quick_gelu_forward(x)
    y_cy, s_cy = cy.quick_gelu_forward(x)
    np.testing.assert_allclose(np.asarray(y_cy), y_py, rtol=1e-12, atol=1e-15)
    dy = np.sin(x)
    np.testing.assert_allclose(np.asarray(cy.quick_gelu_backward(dy, x, s_py)),
                               py.quick_gelu_backward(dy, x, s_py), rtol=1e-12, atol=1e-15)


@given(matrices())
@settings(max_examples=60, deadline=None)
def test_softmax_rows_are_distributions(s):
    y = kernels.softmax_forward(s)
    assert np.all(y >= 0)
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)


def test_causal_rows_never_look_ahead():
    L = 4
    s = np.zeros((2 * L, L))
    y = kernels.softmax_forward(s, L)
    for r in range(2 * L):
        visible = r % L + 1
        np.testing.assert_allclose(y[r, :visible], 1.0 / visible)
        assert np.all(y[r, visible:] == 0)


def test_kernel_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 5))
    g, b = rng.normal(size=5), rng.normal(size=5)
    w = rng.normal(size=(3, 5))

    def f_ln(x):
        return (kernels.layernorm_forward(x, g, b)[0] * w).sum()

    def f_sm(x):
        return (kernels.softmax_forward(x) * w).sum()

    def f_ge(x):
        return (kernels.quick_gelu_forward(x)[0] * w).sum()

    y, xhat, rstd = kernels.layernorm_forward(x, g, b)
    sm = kernels.softmax_forward(x)
    _, sig = kernels.quick_gelu_forward(x)
    analytic = {
        f_ln: kernels.layernorm_backward(w, xhat, rstd, g),
        f_sm: kernels.softmax_backward(w, sm),
        f_ge: kernels.quick_gelu_backward(w, x, sig),
    }
    h = 1e-6
    for f, grad in analytic.items():
        num = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[idx] += h
            xm[idx] -= h
            num[idx] = (f(xp) - f(xm)) / (2 * h)
        np.testing.assert_allclose(grad, num, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("choice, expected", [("python", "python"), ("auto", None)])
def test_environment_selects_backend(choice, expected):
    import os
    import subprocess
    import sys
    env = dict(os.environ, SHIPPROMPT_KERNELS=choice)
    out = subprocess.run([sys.executable, "-c", "import shipprompt; print(shipprompt.KERNEL_BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == (expected or ("compiled" if cy is not None else "python"))
