"""Contrastive image-caption pretraining of the tiny encoders.

Random transformer weights map every image to nearly the same pooled vector,
so nothing downstream can be learned from them. This module gives the tiny
backend what a real vision-language checkpoint brings: a visual tower and a
text tower whose pooled features agree on synthetic ship captions.

Captions are rendered from either prompt template and preceded by a random
number of small random prefix vectors, so the text tower is already used to
learnable context in front of the class words. Results are deterministic in
the seed and cached in memory and on disk.
"""
import hashlib
import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _transformer, seeding
from .container import ContainerError
from .encoders import (
    Architecture,
    EncoderParams,
    _freeze,
    _patchify,
    _shapes,
    load_weights,
    save_weights,
)
from .prompting import END_ID, FLAT_TEMPLATE, HIERARCHICAL_TEMPLATE, PAD_ID, tokenize
from .synthdata import SynthSpec, class_list, render_sample

log = logging.getLogger(__name__)

RECIPE_VERSION = 1
PRETRAIN = "pretrain"


@dataclass(frozen=True)
class PretrainRecipe:
    steps: int = 600
    image_batch: int = 48
    lr: float = 2e-3
    tau: float = 0.07
    max_prefix: int = 16
    prefix_std: float = 0.02
    primaries: int = 3
    secondaries_per_primary: int = 4
    finals_per_secondary: int = 3
    images_per_class: int = 25
    clutter_level: float = 0.2

    @classmethod
    def auxiliary(cls):
        """Recipe for the auxiliary encoder: its own corpus, twice the clutter."""
        return cls(clutter_level=0.4)

    def key(self):
        return repr(sorted(self.__dict__.items()))


def visual_forward(params, images):
    """Pooled visual features plus everything the backward pass needs."""
    arch = params.arch
    B = images.shape[0]
    patches = _patchify(images, arch.patch_size)
    x = patches @ params["visual.patch_w"].T
    cls = np.broadcast_to(params["visual.cls"], (B, 1, arch.model_dim))
    x = np.concatenate([cls, x], axis=1) + params["visual.pos"]
    x, ln_pre = _transformer._layernorm(x, params["visual.ln_pre.g"], params["visual.ln_pre.b"])
    x, _, caches = _transformer.stack_forward(x, params.blocks("visual"), arch.n_heads, keep=True)
    y, ln_post = _transformer._layernorm(x[:, 0], params["visual.ln_post.g"], params["visual.ln_post.b"])
    feats = y @ params["visual.proj"]
    return feats, (patches, ln_pre, caches, y, ln_post, x.shape)


def visual_backward(params, cache, dfeats, grads):
    patches, ln_pre, caches, y, ln_post, shape = cache
    _transformer._acc(grads, "visual.proj", y.T @ dfeats)
    dcls = _transformer._layernorm_back(dfeats @ params["visual.proj"].T, ln_post, grads, "visual.ln_post.")
    dx = np.zeros(shape)
    dx[:, 0] = dcls
    block_grads = [{} for _ in caches]
    dx = _transformer.stack_backward(dx, caches, block_grads)
    _merge_blocks(grads, "visual", block_grads)
    dx = _transformer._layernorm_back(dx, ln_pre, grads, "visual.ln_pre.")
    _transformer._acc(grads, "visual.pos", dx.sum(axis=0))
    _transformer._acc(grads, "visual.cls", dx[:, 0].sum(axis=0))
    d = dx.shape[-1]
    _transformer._acc(grads, "visual.patch_w",
                      dx[:, 1:].reshape(-1, d).T @ patches.reshape(-1, patches.shape[-1]))


def text_forward_ids(params, ids, prefix, pool_index):
    """Text features for token ids ``(C, L)``; rows of ``prefix`` fill positions where ``ids < 0``."""
    emb = params["text.token_embed"][np.maximum(ids, 0)]
    emb[ids < 0] = prefix
    L = ids.shape[1]
    x = emb + params["text.pos"][:L]
    x, _, caches = _transformer.stack_forward(x, params.blocks("text"), params.arch.n_heads,
                                              causal=True, keep=True)
    rows = np.arange(len(ids))
    y, ln = _transformer._layernorm(x[rows, pool_index], params["text.ln_final.g"], params["text.ln_final.b"])
    feats = y @ params["text.proj"]
    return feats, (ids, pool_index, caches, y, ln, x.shape)


def text_backward_ids(params, cache, dfeats, grads):
    ids, pool_index, caches, y, ln, shape = cache
    _transformer._acc(grads, "text.proj", y.T @ dfeats)
    dpool = _transformer._layernorm_back(dfeats @ params["text.proj"].T, ln, grads, "text.ln_final.")
    dx = np.zeros(shape)
    dx[np.arange(shape[0]), pool_index] = dpool
    block_grads = [{} for _ in caches]
    dx = _transformer.stack_backward(dx, caches, block_grads)
    _merge_blocks(grads, "text", block_grads)
    _transformer._acc(grads, "text.pos", np.pad(dx.sum(axis=0), ((0, params.arch.context_window - shape[1]), (0, 0))))
    table = np.zeros_like(params["text.token_embed"])
    mask = ids >= 0
    np.add.at(table, ids[mask], dx[mask])
    _transformer._acc(grads, "text.token_embed", table)


def _merge_blocks(grads, tower, block_grads):
    for i, bg in enumerate(block_grads):
        for k, v in bg.items():
            _transformer._acc(grads, f"{tower}.blocks.{i}.{k}", v)


def contrastive_loss(image_feats, text_feats, labels, tau):
    """Mean cross-entropy of each image against all captions; returns loss and both gradients."""
    ni = np.linalg.norm(image_feats, axis=1, keepdims=True)
    nt = np.linalg.norm(text_feats, axis=1, keepdims=True)
    u, w = image_feats / ni, text_feats / nt
    logits = (u @ w.T) / tau
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    rows = np.arange(len(labels))
    loss = -np.log(p[rows, labels]).mean()
    dlog = p
    dlog[rows, labels] -= 1.0
    dcos = dlog / (tau * len(labels))
    du, dw = dcos @ w, dcos.T @ u
    dimg = (du - (du * u).sum(axis=1, keepdims=True) * u) / ni
    dtxt = (dw - (dw * w).sum(axis=1, keepdims=True) * w) / nt
    return float(loss), dimg, dtxt


def _corpus(recipe, seed):
    spec = SynthSpec(recipe.primaries, recipe.secondaries_per_primary, recipe.finals_per_secondary,
                     recipe.images_per_class, clutter_level=recipe.clutter_level,
                     seed=seeding.derive_seed(seed, PRETRAIN + ".corpus"))
    classes = class_list(spec)
    images, labels = [], []
    for cls in classes:
        for i in range(recipe.images_per_class):
            x = render_sample(cls, spec, i).astype(np.float64) / 255.0
            images.append(((x - 0.5) / 0.25).transpose(2, 0, 1))
            labels.append(cls.class_id)
    return classes, np.stack(images), np.array(labels)


def _captions(classes, arch, rng, recipe):
    """One caption per class: random template, random-length prefix."""
    rows, pool = [], []
    for cls in classes:
        template = HIERARCHICAL_TEMPLATE if rng.random() < 0.5 else FLAT_TEMPLATE
        words = tokenize(template.format(primary=cls.primary, secondary=cls.secondary, final=cls.final),
                         arch.vocab_size)
        k = int(rng.integers(0, recipe.max_prefix + 1))
        rows.append([-1] * k + words + [END_ID])
    L = max(len(r) for r in rows)
    ids = np.full((len(rows), L), PAD_ID, dtype=np.intp)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = r
        pool.append(len(r) - 1)
    n_prefix = int((ids < 0).sum())
    prefix = rng.normal(0.0, recipe.prefix_std, size=(n_prefix, arch.model_dim))
    return ids, prefix, np.array(pool)


def width_scaled_init(seed, arch):
    """Starting weights for pretraining, scaled by layer width.

    The flat N(0, 0.02) draw of ``init_tiny_encoder`` is far too small at
    model_dim 32: every image maps to the same class token and training
    stalls on a collapsed plateau.
    """
    rng = np.random.default_rng(seed)
    D = arch.model_dim
    attn_std, fc_std = D ** -0.5, (2 * D) ** -0.5
    out_std = D ** -0.5 * (2 * arch.n_blocks) ** -0.5
    arrays = {}
    for name, shape in _shapes(arch).items():
        if ".ln" in name or name.startswith("text.ln") or name.startswith("visual.ln"):
            arrays[name] = np.ones(shape) if name.endswith(".g") else np.zeros(shape)
        elif name.endswith("_b"):
            arrays[name] = np.zeros(shape)
        else:
            std = {"attn.in_w": attn_std, "attn.out_w": out_std, "mlp.fc_w": fc_std,
                   "mlp.proj_w": out_std, "patch_w": (3 * arch.patch_size ** 2) ** -0.5,
                   "text.pos": 0.01, "text.token_embed": 0.02}
            key = next((k for k in std if name.endswith(k)), None)
            arrays[name] = rng.normal(0.0, std[key] if key else D ** -0.5, size=shape)
    return arrays


def pretrain_encoder(seed, arch=None, recipe=None):
    """Pretrain both towers from a width-scaled init; returns frozen ``EncoderParams``."""
    arch = (arch or Architecture()).validate()
    recipe = recipe or PretrainRecipe()
    arrays = width_scaled_init(seeding.derive_seed(seed, PRETRAIN + ".init"), arch)
    params = EncoderParams(arch, arrays)
    classes, images, labels = _corpus(recipe, seed)
    rng = seeding.rng_for(seed, PRETRAIN)
    m = {k: np.zeros_like(v) for k, v in arrays.items()}
    v2 = {k: np.zeros_like(v) for k, v in arrays.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    for step in range(1, recipe.steps + 1):
        pick = rng.choice(len(images), size=recipe.image_batch, replace=False)
        ids, prefix, pool = _captions(classes, arch, rng, recipe)
        ifeat, icache = visual_forward(params, images[pick])
        tfeat, tcache = text_forward_ids(params, ids, prefix, pool)
        loss, dimg, dtxt = contrastive_loss(ifeat, tfeat, labels[pick], recipe.tau)
        grads = {}
        visual_backward(params, icache, dimg, grads)
        text_backward_ids(params, tcache, dtxt, grads)
        lr = recipe.lr * 0.5 * (1 + np.cos(np.pi * (step - 1) / recipe.steps))
        for k, g in grads.items():
            m[k] = b1 * m[k] + (1 - b1) * g
            v2[k] = b2 * v2[k] + (1 - b2) * g * g
            mhat = m[k] / (1 - b1 ** step)
            vhat = v2[k] / (1 - b2 ** step)
            arrays[k] -= lr * mhat / (np.sqrt(vhat) + eps)
        if step % 100 == 0:
            log.info("pretrain seed %d step %d loss %.4f", seed, step, loss)
    return EncoderParams(arch, _freeze(arrays))


def cache_dir():
    root = os.environ.get("SHIPPROMPT_CACHE")
    if root:
        return Path(root)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "shipprompt"


def _cache_path(seed, arch, recipe):
    tag = hashlib.sha256(f"{RECIPE_VERSION}|{seed}|{arch}|{recipe.key()}".encode()).hexdigest()[:20]
    return cache_dir() / f"encoder-{tag}.hpmt"


@lru_cache(maxsize=8)
def pretrained_encoder(seed, arch=None, recipe=None):
    """Cached ``pretrain_encoder``; a disk copy is reused when it is readable."""
    arch = arch or Architecture()
    recipe = recipe or PretrainRecipe()
    path = _cache_path(seed, arch, recipe)
    if path.exists():
        try:
            params = load_weights(path)
            if params.arch == arch:
                return params
        except (ContainerError, OSError):
            log.warning("ignoring unreadable encoder cache %s", path)
    params = pretrain_encoder(seed, arch, recipe)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        save_weights(params, tmp)
        os.replace(tmp, path)
    except OSError as exc:
        log.warning("could not write encoder cache %s: %s", path, exc)
    return params
