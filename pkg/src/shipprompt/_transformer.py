"""Pre-LN transformer blocks: forward pass and input-gradient backward pass.

Parameters are never differentiated here; the frozen encoders only need
vector-Jacobian products with respect to their inputs.
"""
import numpy as np

from . import kernels


def _layernorm(x, gamma, beta):
    shape = x.shape
    y, xhat, rstd = kernels.layernorm_forward(x.reshape(-1, shape[-1]), gamma, beta)
    return y.reshape(shape), (xhat, rstd, gamma, shape)


def _layernorm_back(dy, cache, grads=None, prefix=""):
    xhat, rstd, gamma, shape = cache
    dy2 = dy.reshape(-1, shape[-1])
    if grads is not None:
        _acc(grads, prefix + "g", (dy2 * xhat).sum(axis=0))
        _acc(grads, prefix + "b", dy2.sum(axis=0))
    return kernels.layernorm_backward(dy2, xhat, rstd, gamma).reshape(shape)


def _acc(grads, name, value):
    if name in grads:
        grads[name] += value
    else:
        grads[name] = np.array(value, dtype=np.float64)


def _linear_grads(grads, name, dout, inp):
    d2 = dout.reshape(-1, dout.shape[-1])
    _acc(grads, name + "_w", d2.T @ inp.reshape(-1, inp.shape[-1]))
    _acc(grads, name + "_b", d2.sum(axis=0))


def layernorm(x, gamma, beta):
    return _layernorm(x, gamma, beta)[0]


def block_forward(x, p, n_heads, causal=False, keep=False):
    """One residual block on ``x`` of shape (B, L, D).

    ``p`` maps the short names ``ln1.g, ln1.b, attn.in_w, attn.in_b, attn.out_w,
    attn.out_b, ln2.g, ln2.b, mlp.fc_w, mlp.fc_b, mlp.proj_w, mlp.proj_b`` to
    arrays. Returns ``(y, attn_probs, cache)``; the cache is ``None`` unless
    ``keep`` is set.
    """
    B, L, D = x.shape
    dh = D // n_heads
    scale = 1.0 / np.sqrt(dh)

    h, ln1 = _layernorm(x, p["ln1.g"], p["ln1.b"])
    qkv = h @ p["attn.in_w"].T + p["attn.in_b"]
    qkv = qkv.reshape(B, L, 3, n_heads, dh).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    probs = kernels.softmax_forward(scores.reshape(-1, L), L if causal else 0)
    probs = probs.reshape(B, n_heads, L, L)
    o = (probs @ v).transpose(0, 2, 1, 3).reshape(B, L, D)
    x1 = x + o @ p["attn.out_w"].T + p["attn.out_b"]

    h2, ln2 = _layernorm(x1, p["ln2.g"], p["ln2.b"])
    u = h2 @ p["mlp.fc_w"].T + p["mlp.fc_b"]
    g, sig = kernels.quick_gelu_forward(u.reshape(-1, u.shape[-1]))
    g = g.reshape(u.shape)
    y = x1 + g @ p["mlp.proj_w"].T + p["mlp.proj_b"]

    cache = None
    if keep:
        cache = (p, n_heads, scale, ln1, q, k, v, probs, ln2, u, sig, h, o, h2, g)
    return y, probs, cache


def block_backward(dy, cache, grads=None):
    """Gradient of a scalar loss w.r.t. the block input, given dL/dy.

    When ``grads`` is a dict, parameter gradients are accumulated into it
    under the same short names as the block parameters.
    """
    p, n_heads, scale, ln1, q, k, v, probs, ln2, u, sig, h, o, h2, g = cache
    B, L, D = dy.shape
    dh = D // n_heads

    dg = dy @ p["mlp.proj_w"]
    du = kernels.quick_gelu_backward(dg.reshape(-1, dg.shape[-1]), u.reshape(-1, u.shape[-1]), sig)
    du = du.reshape(u.shape)
    dh2 = du @ p["mlp.fc_w"]
    if grads is not None:
        _linear_grads(grads, "mlp.proj", dy, g)
        _linear_grads(grads, "mlp.fc", du, h2)
    dx1 = dy + _layernorm_back(dh2, ln2, grads, "ln2.")

    do = (dx1 @ p["attn.out_w"]).reshape(B, L, n_heads, dh).transpose(0, 2, 1, 3)
    dprobs = do @ v.transpose(0, 1, 3, 2)
    dv = probs.transpose(0, 1, 3, 2) @ do
    dscores = kernels.softmax_backward(dprobs.reshape(-1, L), probs.reshape(-1, L))
    dscores = dscores.reshape(B, n_heads, L, L) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q
    dqkv = np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(B, L, 3 * D)
    dh1 = dqkv @ p["attn.in_w"]
    if grads is not None:
        _linear_grads(grads, "attn.out", dx1, o)
        _linear_grads(grads, "attn.in", dqkv, h)
    return dx1 + _layernorm_back(dh1, ln1, grads, "ln1.")


def stack_forward(x, blocks, n_heads, causal=False, keep=False):
    caches = []
    probs = None
    for p in blocks:
        x, probs, cache = block_forward(x, p, n_heads, causal=causal, keep=keep)
        caches.append(cache)
    return x, probs, caches


def stack_backward(dy, caches, grads=None):
    """Backward through a block stack; ``grads`` (if given) is one dict per block."""
    for i in reversed(range(len(caches))):
        dy = block_backward(dy, caches[i], None if grads is None else grads[i])
    return dy
