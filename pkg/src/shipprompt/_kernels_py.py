"""Pure numpy implementations of the hot elementwise/row kernels.

Every function takes and returns 2-D float64 arrays (rows x features). The
compiled module ``_ckernels`` exposes the same names and signatures.
"""
import numpy as np

QUICK_GELU_ALPHA = 1.702


def layernorm_forward(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gamma + beta, xhat, rstd[:, 0]


def layernorm_backward(dy, xhat, rstd, gamma):
    g = dy * gamma
    mean_g = g.mean(axis=1, keepdims=True)
    mean_gx = (g * xhat).mean(axis=1, keepdims=True)
    return rstd[:, None] * (g - mean_g - xhat * mean_gx)


def softmax_forward(s, causal_len=0):
    """Row softmax. With ``causal_len = L`` row r may only see columns <= r % L."""
    s = np.array(s, dtype=np.float64, copy=True)
    if causal_len:
        q = np.arange(s.shape[0]) % causal_len
        s[np.arange(s.shape[1])[None, :] > q[:, None]] = -np.inf
    s -= s.max(axis=1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=1, keepdims=True)
    return s


def softmax_backward(dy, y):
    return y * (dy - (dy * y).sum(axis=1, keepdims=True))


def quick_gelu_forward(x):
    sig = 1.0 / (1.0 + np.exp(-QUICK_GELU_ALPHA * x))
    return x * sig, sig


def quick_gelu_backward(dy, x, sig):
    return dy * (sig + QUICK_GELU_ALPHA * x * sig * (1.0 - sig))
