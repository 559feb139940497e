"""Procedural top-down "ship" images with a three-level class hierarchy.

The primary type fixes the hull silhouette and hull colour, the secondary type
the deck stripe pattern, and the final type a small motif drawn in a fixed box
at the hull centre. Per-sample translation jitter and background clutter come
from ``(seed, index)`` only, so two classes rendered at the same index differ
exactly where their hierarchy levels differ.
"""
from dataclasses import dataclass

import numpy as np

from . import seeding
from .taxonomy import ClassDescriptor, DatasetManifest, ImageRecord, encode_inline

PRIMARY_NAMES = ["warship", "merchant", "auxiliary", "fishing", "patrol", "research"]
SECONDARY_NAMES = [
    ["destroyer", "frigate", "carrier", "cruiser", "corvette", "submarine"],
    ["tanker", "container", "bulk", "ferry", "liner", "reefer"],
    ["tender", "oiler", "tug", "hospital", "salvage", "survey"],
    ["trawler", "longliner", "seiner", "gillnetter", "dredger", "crabber"],
    ["cutter", "gunboat", "interceptor", "launch", "picket", "skiff"],
    ["icebreaker", "oceanographic", "drillship", "cablelayer", "buoytender", "weather"],
]
FINAL_NAMES = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"]

SEA = np.array([24, 48, 96], dtype=np.float64)
HULL_COLORS = np.array([[150, 150, 160], [200, 90, 40], [230, 220, 80],
                        [90, 200, 110], [240, 240, 240], [120, 80, 200]], dtype=np.float64)
STRIPE_COLORS = np.array([[20, 20, 20], [250, 250, 250], [220, 40, 40],
                          [40, 220, 220], [250, 160, 0], [160, 0, 160]], dtype=np.float64)
MOTIF_COLORS = np.array([[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 255, 0],
                         [255, 0, 255], [0, 255, 255], [255, 128, 0], [0, 0, 0]], dtype=np.float64)
MOTIF_SIZE = 6
MAX_JITTER = 2


@dataclass(frozen=True)
class SynthSpec:
    primaries: int = 2
    secondaries_per_primary: int = 3
    finals_per_secondary: int = 2
    images_per_class: int = 12
    image_size: int = 32
    clutter_level: float = 0.1
    seed: int = 0
    patch_size: int = 4

    def validate(self):
        for name in ("primaries", "secondaries_per_primary", "finals_per_secondary", "images_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"invalid spec: {name} must be >= 1")
        if self.image_size < 16 or self.image_size % self.patch_size:
            raise ValueError(
                f"invalid spec: image_size {self.image_size} must be >= 16 and divisible by {self.patch_size}"
            )
        if not 0.0 <= self.clutter_level <= 1.0:
            raise ValueError("invalid spec: clutter_level must lie in [0, 1]")
        if self.finals_per_secondary > len(FINAL_NAMES):
            raise ValueError(f"invalid spec: at most {len(FINAL_NAMES)} finals per secondary")
        return self

    @property
    def n_classes(self):
        return self.primaries * self.secondaries_per_primary * self.finals_per_secondary


def _name(pool, i, fallback):
    return pool[i] if i < len(pool) else fallback


def class_list(spec):
    classes = []
    S, F = spec.secondaries_per_primary, spec.finals_per_secondary
    for p in range(spec.primaries):
        primary = _name(PRIMARY_NAMES, p, f"type{p}")
        pool = SECONDARY_NAMES[p] if p < len(SECONDARY_NAMES) else []
        for s in range(S):
            secondary = _name(pool, s, f"{primary} group{s}")
            for f in range(F):
                cid = (p * S + s) * F + f
                classes.append(ClassDescriptor(cid, primary, secondary, f"{secondary} {FINAL_NAMES[f]}"))
    return classes


def _levels(cls, spec):
    F, S = spec.finals_per_secondary, spec.secondaries_per_primary
    f = cls.class_id % F
    s = (cls.class_id // F) % S
    p = cls.class_id // (F * S)
    if p >= spec.primaries or class_list_entry(spec, cls.class_id) != cls:
        raise ValueError(f"class {cls.class_id} ({cls.final!r}) was not generated by this spec")
    return p, s, f


def class_list_entry(spec, class_id):
    classes = class_list(spec)
    return classes[class_id] if 0 <= class_id < len(classes) else None


def hull_mask(primary_index, size):
    """Silhouette of a primary type, centred in a ``size`` x ``size`` frame."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = cx = (size - 1) / 2.0
    family = primary_index % 3
    half_len = size * (0.36 - 0.03 * (primary_index // 3 % 2))
    half_wid = size * (0.13 + 0.03 * (primary_index // 3 % 2))
    dx, dy = (xx - cx) / half_len, (yy - cy) / half_wid
    if family == 0:
        return dx ** 2 + dy ** 2 <= 1.0
    if family == 1:
        # box hull with a pointed bow on the right
        body = (np.abs(dx) <= 1.0) & (np.abs(dy) <= 1.0)
        bow = np.abs(dy) <= np.clip((1.0 - dx) / 0.4, 0, 1)
        return body & ((dx <= 0.6) | bow)
    return np.abs(dx) + np.abs(dy) <= 1.0


def _stripes(secondary_index, size):
    yy, xx = np.mgrid[0:size, 0:size]
    kind = secondary_index % 3
    period = 2 + secondary_index // 3
    if kind == 0:
        return (xx // period) % 2 == 0
    if kind == 1:
        return (yy // period) % 2 == 0
    return ((xx + yy) // period) % 2 == 0


def _motif_box(size):
    lo = size // 2 - MOTIF_SIZE // 2
    return slice(lo, lo + MOTIF_SIZE), slice(lo, lo + MOTIF_SIZE)


def _motif(final_index):
    yy, xx = np.mgrid[0:MOTIF_SIZE, 0:MOTIF_SIZE]
    h = MOTIF_SIZE // 2
    quadrant = (yy >= h) * 2 + (xx >= h)
    pattern = [np.ones_like(quadrant, bool), quadrant % 3 == 0, quadrant < 2, quadrant % 2 == 0]
    return pattern[final_index % 4] if final_index < 4 else ~pattern[final_index % 4]


def _jitter(spec, index):
    # every offset appears once per cycle, in a seeded order
    side = 2 * MAX_JITTER + 1
    cycle = seeding.rng_for(spec.seed, seeding.SYNTH + ".jitter").permutation(side * side)
    k = int(cycle[index % len(cycle)])
    return k // side - MAX_JITTER, k % side - MAX_JITTER


def _layers(cls, spec):
    """Un-jittered RGB canvas of the ship and its silhouette mask."""
    p, s, f = _levels(cls, spec)
    size = spec.image_size
    hull = hull_mask(p, size)
    canvas = np.zeros((size, size, 3))
    canvas[hull] = HULL_COLORS[p % len(HULL_COLORS)]
    deck = hull & _stripes(s, size)
    canvas[deck] = STRIPE_COLORS[s % len(STRIPE_COLORS)]
    ys, xs = _motif_box(size)
    motif = np.zeros((size, size), bool)
    motif[ys, xs] = _motif(f)
    canvas[motif] = MOTIF_COLORS[f % len(MOTIF_COLORS)]
    return canvas, hull


def _shift(a, dy, dx, fill):
    out = np.empty_like(a)
    out[...] = fill
    size = a.shape[0]
    src_y = slice(max(0, -dy), size - max(0, dy))
    dst_y = slice(max(0, dy), size - max(0, -dy))
    src_x = slice(max(0, -dx), size - max(0, dx))
    dst_x = slice(max(0, dx), size - max(0, -dx))
    out[dst_y, dst_x] = a[src_y, src_x]
    return out


def ship_mask(cls, spec, index):
    """Pixels covered by the ship in sample ``index`` (after jitter)."""
    _, hull = _layers(cls, spec)
    dy, dx = _jitter(spec, index)
    return _shift(hull, dy, dx, False)


def render_sample(cls, spec, index):
    """Deterministic uint8 (H, W, 3) render of sample ``index`` of class ``cls``."""
    spec.validate()
    canvas, hull = _layers(cls, spec)
    dy, dx = _jitter(spec, index)
    canvas = _shift(canvas, dy, dx, 0.0)
    hull = _shift(hull, dy, dx, False)
    size = spec.image_size
    background = np.broadcast_to(SEA, (size, size, 3)).copy()
    if spec.clutter_level > 0:
        rng = seeding.rng_for(spec.seed * 1_000_003 + index, seeding.SYNTH + ".clutter")
        background += rng.uniform(-1, 1, size=(size, size, 3)) * 80.0 * spec.clutter_level
    img = np.where(hull[..., None], canvas, background)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_dataset(spec, name=None):
    """A manifest with ``images_per_class`` inline images for each generated class."""
    spec.validate()
    classes = class_list(spec)
    records = []
    for cls in classes:
        for i in range(spec.images_per_class):
            pixels = render_sample(cls, spec, i)
            records.append(ImageRecord(encode_inline(pixels), cls.class_id, spec.image_size, spec.image_size))
    name = name or (f"synthetic-ships-p{spec.primaries}s{spec.secondaries_per_primary}"
                    f"f{spec.finals_per_secondary}-seed{spec.seed}")
    return DatasetManifest(tuple(classes), tuple(records), name)
