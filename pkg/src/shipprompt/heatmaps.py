"""Text-guided relevance maps for the frozen and the prompt-tuned classifier.

A frozen encoder's own attention is the same before and after prompt
tuning, so comparing the two models needs a map that depends on what was
trained. Each patch token is scored by its cosine similarity to the text
feature of the predicted class; a temperature softmax over patches turns the
scores into a distribution that is rendered like an attention map.
"""
from dataclasses import dataclass

import numpy as np

from . import classifier
from .biasnets import bottleneck_forward
from .encoders import encode_text, encode_visual, grid_heatmap
from .model import image_to_input
from .prompting import build_template, embed_template


@dataclass(frozen=True)
class HeatmapPanels:
    raw: np.ndarray
    frozen: np.ndarray
    trained: np.ndarray
    frozen_class: int
    trained_class: int


def relevance_grid(tokens, text_feat, grid, tau):
    """Softmax over patches of cos(token, text) / tau, shaped to the patch grid."""
    t = np.asarray(text_feat, dtype=np.float64)
    tok = np.asarray(tokens, dtype=np.float64)
    norms = np.linalg.norm(tok, axis=1) * np.linalg.norm(t)
    cos = (tok @ t) / np.where(norms > 0, norms, 1.0)
    z = cos / tau
    e = np.exp(z - z.max())
    return (e / e.sum()).reshape(grid)


def mask_mass(heatmap, mask):
    """Share of total heat that falls inside ``mask``; 0 for an all-zero map."""
    total = float(np.sum(heatmap))
    if total <= 0:
        return 0.0
    return min(1.0, float(np.sum(heatmap[np.asarray(mask, bool)])) / total)


def frozen_text_features(model, class_ids):
    """Hand-written prompts with no learned context: the zero-shot classifier."""
    clip = model.encoders.clip
    return np.stack([encode_text(clip, embed_template(clip, build_template(model.manifest.class_by_id(c),
                                                                            model.template)))
                     for c in class_ids])


def compare(model, state, pixels, class_ids=None):
    """Raw luminance, frozen and trained relevance maps for one uint8 (H, W, 3) image."""
    cfg = model.config
    class_ids = list(class_ids or model.manifest.class_ids)
    x = image_to_input(pixels)
    out_a = encode_visual(model.encoders.clip, x)
    out_b = encode_visual(model.encoders.aux, x)
    H, W = pixels.shape[:2]

    frozen_text = frozen_text_features(model, class_ids)
    frozen_probs = classifier.class_probabilities(out_a.pooled, frozen_text, cfg.tau, class_ids)
    fc = classifier.predict(frozen_probs)
    frozen = grid_heatmap(relevance_grid(out_a.tokens, frozen_text[class_ids.index(fc)], out_a.grid, cfg.tau),
                          (H, W))

    a, b = out_a.pooled, out_b.pooled
    trained_text, _ = model.text_features(state, model.delta(state, a, b), class_ids)
    tc = classifier.predict(model.probabilities(state, a, b, class_ids, text_feats=trained_text))
    tokens = out_a.tokens
    if cfg.use_visual_bias:
        tokens = tokens + bottleneck_forward(state.visual_net, out_b.tokens)
    trained = grid_heatmap(relevance_grid(tokens, trained_text[class_ids.index(tc)], out_a.grid, cfg.tau),
                           (H, W))

    raw = np.asarray(pixels, dtype=np.float64).mean(axis=2) / 255.0
    return HeatmapPanels(raw, frozen, trained, fc, tc)


def side_by_side(panels):
    """Panels concatenated left to right: raw | frozen | trained."""
    return np.concatenate([panels.raw, panels.frozen, panels.trained], axis=1)
