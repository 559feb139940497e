"""Hierarchical prompt templates, learnable context vectors and prompt assembly."""
import re
import zlib
from dataclasses import dataclass

import numpy as np

from .encoders import TokenEmbeddingSequence

PAD_ID, START_ID, END_ID = 0, 1, 2
N_SPECIAL = 3

HIERARCHICAL_TEMPLATE = (
    "a photo of a ship, the primary type is {primary}, "
    "secondary type is {secondary}, final type is {final}"
)
FLAT_TEMPLATE = "a photo of a {final}"

_WORD = re.compile(r"[a-z0-9]+")


def tokenize(text, vocab_size):
    """Lowercase, split on anything that is not a letter or digit, hash each word.

    Word ids are ``3 + crc32(word) % (vocab_size - 3)``; ids 0-2 are pad,
    start and end.
    """
    words = _WORD.findall(text.lower())
    return [N_SPECIAL + zlib.crc32(w.encode("utf-8")) % (vocab_size - N_SPECIAL) for w in words]


@dataclass(frozen=True)
class PromptTemplate:
    text: str


@dataclass
class ContextVectors:
    V: np.ndarray

    @property
    def M(self):
        return self.V.shape[0]


@dataclass(frozen=True)
class PromptTokens:
    sequence: TokenEmbeddingSequence
    M: int

    @property
    def values(self):
        return self.sequence.values

    @property
    def learnable(self):
        return self.sequence.learnable

    def __len__(self):
        return len(self.sequence)


def build_template(cls, template=HIERARCHICAL_TEMPLATE):
    """Render a class into prompt text. ``template`` takes ``{primary}``, ``{secondary}``, ``{final}``."""
    for level, value in zip(("primary", "secondary", "final"), cls.levels):
        if not value.strip():
            raise ValueError(f"class {cls.class_id}: empty {level} name")
    return PromptTemplate(template.format(primary=cls.primary, secondary=cls.secondary, final=cls.final))


def embed_template(text_params, template, M=0):
    """Token embeddings of the template followed by the end token.

    ``M`` reserves room for the context vectors that will precede it.
    """
    arch = text_params.arch
    ids = tokenize(template.text, arch.vocab_size) + [END_ID]
    if M + len(ids) > arch.context_window:
        raise ValueError(
            f"context overflow: {M} context vectors + {len(ids)} template tokens "
            f"> window {arch.context_window}"
        )
    values = np.array(text_params["text.token_embed"][ids])
    return TokenEmbeddingSequence(values, np.zeros(len(ids), dtype=bool))


def init_context(M, d_t, seed):
    if M < 1:
        raise ValueError(f"context length must be >= 1, got {M}")
    rng = np.random.default_rng(seed)
    return ContextVectors(rng.normal(0.0, 0.02, size=(M, d_t)))


def assemble_prompt(context, delta, template_embeddings, context_window=None):
    """Prompt = [v_1 + delta, ..., v_M + delta, template tokens]."""
    V = context.V
    delta = np.asarray(delta, dtype=np.float64)
    tmpl = template_embeddings.values
    if delta.shape != (V.shape[1],) or tmpl.shape[1] != V.shape[1]:
        raise ValueError(
            f"dimension mismatch: context {V.shape}, delta {delta.shape}, template {tmpl.shape}"
        )
    if context_window is not None and context.M + len(tmpl) > context_window:
        raise ValueError(
            f"context overflow: prompt length {context.M + len(tmpl)} > window {context_window}"
        )
    values = np.concatenate([V + delta, tmpl], axis=0)
    learnable = np.zeros(len(values), dtype=bool)
    learnable[: context.M] = True
    return PromptTokens(TokenEmbeddingSequence(values, learnable), context.M)

