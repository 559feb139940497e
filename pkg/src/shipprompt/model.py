"""The full prompt-tuned classifier: frozen encoders + context vectors + bias nets.

Forward for one image x against candidate classes c_1..c_C::

    a = A(x) pooled,  b = B(x) pooled
    delta = RemoteNet(b)            (or a meta-net on a for the CoCoOp baseline)
    I = a + VisualNet(b)
    t_c = T([v_1 + delta, ..., v_M + delta, template(c)])
    P(c | x) = softmax_c(cos(I, t_c) / tau)
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import classifier, seeding
from .biasnets import BottleneckParams, bottleneck_backward, bottleneck_forward, init_bottleneck
from .encoders import (
    EncoderParams,
    encode_visual_batch,
    init_tiny_encoder,
    text_forward,
    text_backward,
)
from .prompting import (
    FLAT_TEMPLATE,
    HIERARCHICAL_TEMPLATE,
    PAD_ID,
    ContextVectors,
    build_template,
    embed_template,
    init_context,
)

SOURCES = ("auxiliary", "primary")


@dataclass(frozen=True)
class EncoderSet:
    """Frozen CLIP-style encoder (visual + text towers) and auxiliary visual encoder."""
    clip: EncoderParams
    aux: EncoderParams

    @classmethod
    def from_seed(cls, seed, arch=None, backbone="pretrained"):
        """``backbone="pretrained"`` runs (or reuses) contrastive pretraining; ``"random"`` does not."""
        clip_seed = seeding.derive_seed(seed, seeding.CLIP_ENCODER)
        aux_seed = seeding.derive_seed(seed, seeding.AUX_ENCODER)
        if backbone == "random":
            return cls(init_tiny_encoder(clip_seed, arch), init_tiny_encoder(aux_seed, arch))
        if backbone == "pretrained":
            from .pretrain import PretrainRecipe, pretrained_encoder
            return cls(pretrained_encoder(clip_seed, arch),
                       pretrained_encoder(aux_seed, arch, PretrainRecipe.auxiliary()))
        raise ValueError(f"unknown backbone {backbone!r}; expected 'pretrained' or 'random'")

    def fingerprints(self):
        return {"clip": self.clip.fingerprint(), "aux": self.aux.fingerprint()}


@dataclass
class TrainedState:
    context: ContextVectors
    remote_net: BottleneckParams
    visual_net: BottleneckParams
    loss_history: List[float] = field(default_factory=list)

    def parameters(self):
        out = {"context.V": self.context.V}
        for prefix, net in (("remote_net", self.remote_net), ("visual_net", self.visual_net)):
            for name, arr in net.arrays().items():
                out[f"{prefix}.{name}"] = arr
        return out

    def copy(self):
        return TrainedState(ContextVectors(np.array(self.context.V)), self.remote_net.copy(),
                            self.visual_net.copy(), list(self.loss_history))


def init_state(config, encoders, seed=None):
    """Fresh trainable state; bias nets start with a zeroed output layer."""
    seed = config.seed if seed is None else seed
    d_t = encoders.clip.arch.model_dim
    src = encoders.aux if config.image_conditional_source == "auxiliary" else encoders.clip
    return TrainedState(
        init_context(config.M, d_t, seeding.derive_seed(seed, seeding.CONTEXT)),
        init_bottleneck(src.arch.output_dim, d_t, seeding.derive_seed(seed, seeding.REMOTE_NET)),
        init_bottleneck(encoders.aux.arch.output_dim, encoders.clip.arch.output_dim,
                        seeding.derive_seed(seed, seeding.VISUAL_NET)),
    )


def image_to_input(pixels):
    """uint8 (H, W, 3) -> float (3, H, W), roughly zero-mean unit-scale."""
    x = np.asarray(pixels, dtype=np.float64) / 255.0
    return ((x - 0.5) / 0.25).transpose(2, 0, 1)


class PromptModel:
    """Binds frozen encoders, a class list and the method flags of a config."""

    def __init__(self, encoders, manifest, config):
        self.encoders = encoders
        self.manifest = manifest
        self.config = config
        if config.image_conditional_source not in SOURCES:
            raise ValueError(f"unknown image_conditional_source {config.image_conditional_source!r}")
        self._templates = {}
        self._features = {}

    @property
    def template(self):
        if self.config.use_hierarchy:
            return self.config.hierarchical_template or HIERARCHICAL_TEMPLATE
        return self.config.flat_template or FLAT_TEMPLATE

    def template_embeddings(self, class_id):
        if class_id not in self._templates:
            cls = self.manifest.class_by_id(class_id)
            self._templates[class_id] = embed_template(
                self.encoders.clip, build_template(cls, self.template), self.config.M
            )
        return self._templates[class_id]

    def encode_images(self, images):
        """Pooled primary and auxiliary features for a stack of (3, H, W) inputs."""
        a, _, _ = encode_visual_batch(self.encoders.clip, images)
        b, _, _ = encode_visual_batch(self.encoders.aux, images)
        return a, b

    def record_features(self, indices, chunk=64):
        missing = [i for i in indices if i not in self._features]
        for start in range(0, len(missing), chunk):
            part = missing[start : start + chunk]
            imgs = np.stack([image_to_input(self.manifest.load_image(i)) for i in part])
            a, b = self.encode_images(imgs)
            for j, i in enumerate(part):
                self._features[i] = (a[j], b[j])
        return [self._features[i] for i in indices]

    # forward pieces

    def delta(self, state, a, b):
        if not self.config.use_text_bias:
            return np.zeros(state.context.V.shape[1])
        src = b if self.config.image_conditional_source == "auxiliary" else a
        return bottleneck_forward(state.remote_net, src)

    def image_feature(self, state, a, b):
        if not self.config.use_visual_bias:
            return np.array(a, dtype=np.float64)
        return a + bottleneck_forward(state.visual_net, b)

    def _prompt_batch(self, state, delta, class_ids):
        M = state.context.M
        embeds = [self.template_embeddings(c).values for c in class_ids]
        L = M + max(len(e) for e in embeds)
        D = state.context.V.shape[1]
        batch = np.empty((len(class_ids), L, D))
        batch[:] = self.encoders.clip["text.token_embed"][PAD_ID]
        batch[:, :M] = state.context.V + delta
        pool = np.empty(len(class_ids), dtype=np.intp)
        for i, e in enumerate(embeds):
            batch[i, M : M + len(e)] = e
            pool[i] = M + len(e) - 1
        return batch, pool

    def text_features(self, state, delta, class_ids, keep=False):
        batch, pool = self._prompt_batch(state, delta, class_ids)
        return text_forward(self.encoders.clip, batch, pool, keep=keep)

    def probabilities(self, state, a, b, class_ids, text_feats=None):
        if text_feats is None:
            text_feats, _ = self.text_features(state, self.delta(state, a, b), class_ids)
        return classifier.class_probabilities(
            self.image_feature(state, a, b), text_feats, self.config.tau, class_ids
        )

    def text_is_image_independent(self):
        return not self.config.use_text_bias

    # training signal

    def loss_and_grads(self, state, a, b, label, class_ids):
        """Cross-entropy for one sample and gradients for every trainable array."""
        cfg = self.config
        delta = self.delta(state, a, b)
        image = self.image_feature(state, a, b)
        feats, cache = self.text_features(state, delta, class_ids, keep=True)
        loss, dimage, dtext = classifier.loss_and_grads(image, feats, cfg.tau, class_ids.index(label))
        dprompt = text_backward(self.encoders.clip, cache, dtext)
        dctx = dprompt[:, : state.context.M]
        grads = {"context.V": dctx.sum(axis=0)}
        if cfg.use_text_bias:
            src = b if cfg.image_conditional_source == "auxiliary" else a
            net_grads, _ = bottleneck_backward(state.remote_net, src, dctx.sum(axis=(0, 1)))
            grads.update({f"remote_net.{k}": v for k, v in net_grads.items()})
        if cfg.use_visual_bias:
            net_grads, _ = bottleneck_backward(state.visual_net, b, dimage)
            grads.update({f"visual_net.{k}": v for k, v in net_grads.items()})
        return loss, grads

    def loss(self, state, a, b, label, class_ids):
        probs = self.probabilities(state, a, b, class_ids)
        return classifier.cross_entropy(probs, label)
