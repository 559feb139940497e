"""Frozen tiny transformer encoders.

One ``EncoderParams`` carries a visual tower and a text tower (CLIP-style).
The primary model uses both towers; the auxiliary remote-sensing encoder is a
second, independently seeded ``EncoderParams`` of which only the visual tower
is read.
"""
import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Tuple

import numpy as np

from . import _transformer
from .container import ContainerError, read_arrays, write_arrays

INIT_STD = 0.02

_BLOCK_KEYS = (
    ("ln1.g", "ln1.b"),
    ("attn.in_w", "attn.in_b", "attn.out_w", "attn.out_b"),
    ("ln2.g", "ln2.b"),
    ("mlp.fc_w", "mlp.fc_b", "mlp.proj_w", "mlp.proj_b"),
)


@dataclass(frozen=True)
class Architecture:
    patch_size: int = 4
    image_size: int = 32
    n_blocks: int = 2
    n_heads: int = 2
    model_dim: int = 32
    output_dim: int = 16
    vocab_size: int = 256
    context_window: int = 48
    mlp_ratio: int = 4

    def validate(self):
        for name in ("patch_size", "image_size", "n_blocks", "n_heads", "model_dim",
                     "output_dim", "vocab_size", "context_window", "mlp_ratio"):
            if getattr(self, name) < 1:
                raise ValueError(f"invalid architecture: {name} must be positive")
        if self.model_dim % self.n_heads:
            raise ValueError(
                f"invalid architecture: model_dim {self.model_dim} not divisible by n_heads {self.n_heads}"
            )
        if self.image_size % self.patch_size:
            raise ValueError(
                f"invalid architecture: image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.vocab_size < 4:
            raise ValueError("invalid architecture: vocab_size must leave room for special tokens")
        return self

    @property
    def grid(self):
        side = self.image_size // self.patch_size
        return side, side

    @property
    def n_patches(self):
        gh, gw = self.grid
        return gh * gw


@dataclass(frozen=True)
class EncoderParams:
    arch: Architecture
    arrays: Mapping[str, np.ndarray]

    def __getitem__(self, name):
        return self.arrays[name]

    def blocks(self, tower):
        out = []
        for i in range(self.arch.n_blocks):
            prefix = f"{tower}.blocks.{i}."
            out.append({k: self.arrays[prefix + k] for group in _BLOCK_KEYS for k in group})
        return out

    def fingerprint(self):
        h = hashlib.sha256()
        for name in sorted(self.arrays):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.arrays[name]).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class EncoderOutput:
    tokens: np.ndarray
    pooled: np.ndarray
    attn_last: np.ndarray
    grid: Tuple[int, int]


@dataclass(frozen=True)
class TokenEmbeddingSequence:
    values: np.ndarray
    learnable: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.learnable is None:
            object.__setattr__(self, "learnable", np.zeros(len(self.values), dtype=bool))

    def __len__(self):
        return len(self.values)


def _freeze(arrays):
    frozen = {}
    for name, arr in arrays.items():
        arr = np.array(arr, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in {name}")
        arr.setflags(write=False)
        frozen[name] = arr
    return frozen


def _shapes(arch):
    D, p, d = arch.model_dim, arch.patch_size, arch.output_dim
    hid = arch.mlp_ratio * D
    shapes = {
        "visual.patch_w": (D, 3 * p * p),
        "visual.cls": (D,),
        "visual.pos": (arch.n_patches + 1, D),
        "visual.ln_pre.g": (D,),
        "visual.ln_pre.b": (D,),
    }
    block = {
        "ln1.g": (D,), "ln1.b": (D,),
        "attn.in_w": (3 * D, D), "attn.in_b": (3 * D,),
        "attn.out_w": (D, D), "attn.out_b": (D,),
        "ln2.g": (D,), "ln2.b": (D,),
        "mlp.fc_w": (hid, D), "mlp.fc_b": (hid,),
        "mlp.proj_w": (D, hid), "mlp.proj_b": (D,),
    }
    for tower in ("visual", "text"):
        if tower == "text":
            shapes["text.token_embed"] = (arch.vocab_size, D)
            shapes["text.pos"] = (arch.context_window, D)
        for i in range(arch.n_blocks):
            for k, s in block.items():
                shapes[f"{tower}.blocks.{i}.{k}"] = s
        final = "visual.ln_post" if tower == "visual" else "text.ln_final"
        shapes[final + ".g"] = (D,)
        shapes[final + ".b"] = (D,)
        shapes[f"{tower}.proj"] = (D, d)
    return shapes


def init_tiny_encoder(seed, arch=None):
    """Seeded N(0, 0.02) weights; layer-norm gains start at 1 and shifts at 0."""
    arch = (arch or Architecture()).validate()
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in _shapes(arch).items():
        if name.endswith((".g",)) and ("ln" in name):
            arrays[name] = np.ones(shape)
        elif name.endswith(".b") and ("ln" in name):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.normal(0.0, INIT_STD, size=shape)
    return EncoderParams(arch, _freeze(arrays))


def _patchify(images, p):
    B, C, H, W = images.shape
    x = images.reshape(B, C, H // p, p, W // p, p).transpose(0, 2, 4, 1, 3, 5)
    return x.reshape(B, (H // p) * (W // p), C * p * p)


def encode_visual_batch(params, images):
    """Encode a stack of images (B, 3, H, W); returns pooled (B, d), tokens, attention."""
    arch = params.arch
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"shape mismatch: expected (B, 3, H, W), got {images.shape}")
    H, W = images.shape[2:]
    if (H, W) != (arch.image_size, arch.image_size):
        raise ValueError(
            f"shape mismatch: image {H}x{W} but encoder expects {arch.image_size}x{arch.image_size}"
        )
    if not np.all(np.isfinite(images)):
        raise ValueError("image pixels must be finite")
    B = images.shape[0]
    x = _patchify(images, arch.patch_size) @ params["visual.patch_w"].T
    cls = np.broadcast_to(params["visual.cls"], (B, 1, arch.model_dim))
    x = np.concatenate([cls, x], axis=1) + params["visual.pos"]
    x = _transformer.layernorm(x, params["visual.ln_pre.g"], params["visual.ln_pre.b"])
    x, probs, _ = _transformer.stack_forward(x, params.blocks("visual"), arch.n_heads)
    x = _transformer.layernorm(x, params["visual.ln_post.g"], params["visual.ln_post.b"])
    feats = x @ params["visual.proj"]
    return feats[:, 0], feats[:, 1:], probs


def encode_visual(params, image):
    """Encode one image (3, H, W) into an ``EncoderOutput``."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ValueError(f"shape mismatch: expected (3, H, W), got {image.shape}")
    pooled, tokens, probs = encode_visual_batch(params, image[None])
    return EncoderOutput(tokens=tokens[0], pooled=pooled[0], attn_last=probs[0], grid=params.arch.grid)


def text_forward(params, embeddings, pool_index, keep=False):
    """Batched text tower on padded embeddings (C, L, D).

    ``pool_index[c]`` is the end-token position of sequence ``c``; causal
    masking keeps padding after it inert. Returns ``(features (C, d), cache)``.
    """
    arch = params.arch
    x = np.asarray(embeddings, dtype=np.float64)
    C, L, D = x.shape
    if L > arch.context_window:
        raise ValueError(f"sequence too long: {L} > context window {arch.context_window}")
    x = x + params["text.pos"][:L]
    x, _, caches = _transformer.stack_forward(x, params.blocks("text"), arch.n_heads,
                                              causal=True, keep=keep)
    rows = np.arange(C)
    pooled_in = x[rows, pool_index]
    pooled, ln_cache = _transformer._layernorm(pooled_in, params["text.ln_final.g"], params["text.ln_final.b"])
    feats = pooled @ params["text.proj"]
    cache = (caches, ln_cache, pool_index, x.shape) if keep else None
    return feats, cache


def text_backward(params, cache, dfeats):
    """Vector-Jacobian product: dL/d(embeddings) given dL/d(features)."""
    caches, ln_cache, pool_index, shape = cache
    dpooled = _transformer._layernorm_back(dfeats @ params["text.proj"].T, ln_cache)
    dx = np.zeros(shape)
    dx[np.arange(shape[0]), pool_index] = dpooled
    return _transformer.stack_backward(dx, caches)


def encode_text(params, embeddings):
    """Encode one ``TokenEmbeddingSequence`` (or L x D array) into a d-vector."""
    values = getattr(embeddings, "values", embeddings)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != params.arch.model_dim:
        raise ValueError(f"shape mismatch: expected (L, {params.arch.model_dim}), got {values.shape}")
    if len(values) > params.arch.context_window:
        raise ValueError(f"sequence too long: {len(values)} > context window {params.arch.context_window}")
    feats, _ = text_forward(params, values[None], np.array([len(values) - 1]))
    return feats[0]


def _bilinear(grid, out_h, out_w):
    gh, gw = grid.shape
    ys = np.clip((np.arange(out_h) + 0.5) * gh / out_h - 0.5, 0, gh - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * gw / out_w - 0.5, 0, gw - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = grid[y0][:, x0] * (1 - wx) + grid[y0][:, x1] * wx
    bot = grid[y1][:, x0] * (1 - wx) + grid[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def _minmax(a):
    lo, hi = a.min(), a.max()
    if hi - lo <= 0:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def attention_heatmap(output, upsample_to):
    """Class-token attention over patches, head-averaged, as an (H, W) map in [0, 1].

    The patch-grid map is min-max normalised, bilinearly upsampled and
    re-normalised so the peak cell reaches exactly 1. A constant map becomes
    all zeros.
    """
    attn = np.asarray(output.attn_last, dtype=np.float64)
    gh, gw = output.grid
    if attn.ndim != 3 or attn.shape[1] != attn.shape[2] or attn.shape[1] != gh * gw + 1:
        raise ValueError(f"shape mismatch: attention {attn.shape} vs grid {gh}x{gw}")
    return grid_heatmap(attn[:, 0, 1:].mean(axis=0).reshape(gh, gw), upsample_to)


def grid_heatmap(grid, upsample_to):
    """Min-max normalise a patch-grid map, upsample bilinearly, normalise again."""
    H, W = upsample_to
    return _minmax(_bilinear(_minmax(np.asarray(grid, dtype=np.float64)), H, W))


def encoder_arrays(params, prefix=""):
    arrays = {prefix + k: v for k, v in params.arrays.items()}
    arrays[prefix + "arch.n_heads"] = np.array([float(params.arch.n_heads)])
    return arrays


def save_weights(params, path):
    write_arrays(path, encoder_arrays(params))


def params_from_arrays(arrays, prefix=""):
    """Rebuild ``EncoderParams`` from container arrays, inferring the architecture from shapes."""
    def get(name):
        try:
            return arrays[prefix + name]
        except KeyError:
            raise ContainerError(f"missing array: {prefix + name}") from None

    patch_w = get("visual.patch_w")
    D = patch_w.shape[0]
    p = int(round(np.sqrt(patch_w.shape[1] / 3)))
    n_patches = get("visual.pos").shape[0] - 1
    side = int(round(np.sqrt(n_patches)))
    n_blocks = 0
    while (prefix + f"visual.blocks.{n_blocks}.ln1.g") in arrays:
        n_blocks += 1
    arch = Architecture(
        patch_size=p,
        image_size=side * p,
        n_blocks=n_blocks,
        n_heads=int(get("arch.n_heads")[0]),
        model_dim=D,
        output_dim=get("visual.proj").shape[1],
        vocab_size=get("text.token_embed").shape[0],
        context_window=get("text.pos").shape[0],
        mlp_ratio=get("visual.blocks.0.mlp.fc_w").shape[0] // D if n_blocks else 4,
    )
    try:
        arch.validate()
    except ValueError as exc:
        raise ContainerError(f"shape mismatch: {exc}") from None
    loaded = {}
    for name, shape in _shapes(arch).items():
        arr = get(name)
        if arr.shape != shape:
            raise ContainerError(f"shape mismatch: {prefix + name} is {arr.shape}, expected {shape}")
        loaded[name] = arr
    return EncoderParams(arch, _freeze(loaded))


def load_weights(path):
    return params_from_arrays(read_arrays(path))
