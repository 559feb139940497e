"""Sub-seed derivation. All randomness flows from one integer seed.

Subsystems derive their generator from ``(seed, label)``; the labels below are
fixed so that changing one subsystem never shifts another's stream.
"""
import zlib

import numpy as np

CLIP_ENCODER = "clip-encoder"
AUX_ENCODER = "aux-encoder"
CONTEXT = "context"
REMOTE_NET = "remote-net"
VISUAL_NET = "visual-net"
SAMPLER = "k-shot-sampler"
SHUFFLE = "epoch-shuffle"
SYNTH = "synthdata"


def derive_seed(seed, label):
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def rng_for(seed, label):
    return np.random.default_rng(derive_seed(seed, label))
