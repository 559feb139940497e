"""Cosine-similarity softmax over class text features, loss and prediction."""
from dataclasses import dataclass

import numpy as np

DEFAULT_TAU = 0.01


@dataclass(frozen=True)
class ClassProbabilities:
    p: np.ndarray
    class_ids: tuple
    tau: float
    logits: np.ndarray


def _norms(a, what):
    n = np.linalg.norm(a, axis=-1)
    if np.any(n == 0):
        raise ValueError(f"zero-norm {what}: cosine similarity undefined")
    return n


def cosine_logits(image_feat, text_feats, tau):
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    image_feat = np.asarray(image_feat, dtype=np.float64)
    text_feats = np.atleast_2d(np.asarray(text_feats, dtype=np.float64))
    cos = (text_feats @ image_feat) / (_norms(text_feats, "text feature") * _norms(image_feat, "image feature"))
    return cos / tau


def _softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def class_probabilities(image_feat, text_feats, tau=DEFAULT_TAU, class_ids=None):
    logits = cosine_logits(image_feat, text_feats, tau)
    if class_ids is None:
        class_ids = tuple(range(len(logits)))
    return ClassProbabilities(_softmax(logits), tuple(class_ids), float(tau), logits)


def _logsumexp(logits):
    m = logits.max()
    return m + np.log(np.exp(logits - m).sum())


def cross_entropy(probs, label):
    try:
        i = probs.class_ids.index(label)
    except ValueError:
        raise ValueError(f"label {label} not among candidate classes {probs.class_ids}") from None
    return float(_logsumexp(probs.logits) - probs.logits[i])


def predict(probs):
    """Argmax class id; exact ties go to the smallest class id."""
    p = probs.p
    best = p.max()
    return min(cid for cid, pi in zip(probs.class_ids, p) if pi == best)


def loss_and_grads(image_feat, text_feats, tau, label_index):
    """Cross-entropy of the cosine softmax and its gradients w.r.t. both feature sets."""
    image_feat = np.asarray(image_feat, dtype=np.float64)
    text_feats = np.asarray(text_feats, dtype=np.float64)
    ni = _norms(image_feat, "image feature")
    nt = _norms(text_feats, "text feature")
    u = image_feat / ni
    w = text_feats / nt[:, None]
    cos = w @ u
    logits = cos / tau
    loss = _logsumexp(logits) - logits[label_index]
    dlogits = _softmax(logits)
    dlogits[label_index] -= 1.0
    dcos = dlogits / tau
    # d cos_c / d image = (w_c - cos_c u) / |image|
    dimage = (dcos @ w - (dcos @ cos) * u) / ni
    dtext = (dcos[:, None] * (u[None, :] - cos[:, None] * w)) / nt[:, None]
    return float(loss), dimage, dtext
