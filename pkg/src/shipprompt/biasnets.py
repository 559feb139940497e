"""Linear-ReLU-Linear bottleneck nets and the two bias fusions.

The Remote-Net turns a pooled auxiliary feature into a text-side bias added to
every context vector; the Visual-Net turns it into an image-side bias added to
the frozen visual feature.
"""
from dataclasses import dataclass

import numpy as np

REDUCTION = 16
PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class BottleneckParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def in_dim(self):
        return self.W1.shape[1]

    @property
    def out_dim(self):
        return self.W2.shape[0]

    def arrays(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return BottleneckParams(*(np.array(getattr(self, n)) for n in PARAM_NAMES))


def hidden_dim(in_dim):
    return max(1, in_dim // REDUCTION)


def init_bottleneck(in_dim, out_dim, seed, zero_last=True):
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"bottleneck dims must be positive, got in={in_dim}, out={out_dim}")
    h = hidden_dim(in_dim)
    rng = np.random.default_rng(seed)
    W1 = rng.normal(0.0, 0.02, size=(h, in_dim))
    b1 = rng.normal(0.0, 0.02, size=h)
    if zero_last:
        W2, b2 = np.zeros((out_dim, h)), np.zeros(out_dim)
    else:
        W2 = rng.normal(0.0, 0.02, size=(out_dim, h))
        b2 = rng.normal(0.0, 0.02, size=out_dim)
    return BottleneckParams(W1, b1, W2, b2)


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_dim:
        raise ValueError(f"dimension mismatch: input has {x.shape[-1]} features, net expects {params.in_dim}")
    return x


def bottleneck_forward(params, x):
    """W2 relu(W1 x + b1) + b2; ``x`` may carry leading batch axes."""
    x = _check_input(params, x)
    hidden = np.maximum(x @ params.W1.T + params.b1, 0.0)
    return hidden @ params.W2.T + params.b2


def bottleneck_backward(params, x, dout):
    """Parameter gradients and input gradient for a single input vector."""
    x = _check_input(params, x)
    pre = params.W1 @ x + params.b1
    hidden = np.maximum(pre, 0.0)
    dhidden = params.W2.T @ dout
    dpre = dhidden * (pre > 0)
    grads = {
        "W1": np.outer(dpre, x),
        "b1": dpre,
        "W2": np.outer(dout, hidden),
        "b2": np.array(dout, dtype=np.float64),
    }
    return grads, params.W1.T @ dpre


def text_bias(remote_net, rs_pooled):
    return bottleneck_forward(remote_net, rs_pooled)


def fuse_image_feature(clip_pooled, visual_net, rs_pooled):
    clip_pooled = np.asarray(clip_pooled, dtype=np.float64)
    if visual_net.out_dim != clip_pooled.shape[-1]:
        raise ValueError(
            f"dimension mismatch: visual net outputs {visual_net.out_dim}, feature has {clip_pooled.shape[-1]}"
        )
    return clip_pooled + bottleneck_forward(visual_net, rs_pooled)
