"""Hierarchical class labels, dataset manifests and base/new class splits."""
import base64
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from .pnm import read_pnm

INLINE_PREFIX = "inline:"
ORDERINGS = ("alphabetical-by-final", "manifest-order")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ClassDescriptor:
    class_id: int
    primary: str
    secondary: str
    final: str

    @property
    def levels(self):
        return (self.primary, self.secondary, self.final)


@dataclass(frozen=True)
class ImageRecord:
    image_ref: str
    class_id: int
    height: int
    width: int


@dataclass(frozen=True)
class DatasetManifest:
    classes: Tuple[ClassDescriptor, ...]
    records: Tuple[ImageRecord, ...]
    name: str = ""
    root: Optional[str] = field(default=None, compare=False)

    def class_by_id(self, class_id):
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise KeyError(class_id)

    @property
    def class_ids(self):
        return tuple(c.class_id for c in self.classes)

    def records_of(self, class_id):
        return [i for i, r in enumerate(self.records) if r.class_id == class_id]

    def to_dict(self):
        return {
            "name": self.name,
            "classes": [
                {"class_id": c.class_id, "primary": c.primary, "secondary": c.secondary, "final": c.final}
                for c in self.classes
            ],
            "records": [
                {"image_ref": r.image_ref, "class_id": r.class_id, "height": r.height, "width": r.width}
                for r in self.records
            ],
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, ensure_ascii=False) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    def load_image(self, index):
        """Pixels of record ``index`` as a uint8 (H, W, 3) array."""
        rec = self.records[index]
        if rec.image_ref.startswith(INLINE_PREFIX):
            raw = base64.b64decode(rec.image_ref[len(INLINE_PREFIX):], validate=True)
            expected = rec.height * rec.width * 3
            if len(raw) != expected:
                raise ManifestError(
                    f"record {index}: inline payload has {len(raw)} bytes, expected {expected}"
                )
            return np.frombuffer(raw, dtype=np.uint8).reshape(rec.height, rec.width, 3)
        path = rec.image_ref
        if self.root and not os.path.isabs(path):
            path = os.path.join(self.root, path)
        pixels = read_pnm(path)
        if pixels.ndim == 2:
            pixels = np.repeat(pixels[:, :, None], 3, axis=2)
        if pixels.shape[:2] != (rec.height, rec.width):
            raise ManifestError(f"record {index}: {path} is {pixels.shape[:2]}, manifest says "
                                f"{(rec.height, rec.width)}")
        return pixels


@dataclass(frozen=True)
class SplitSpec:
    base_class_ids: Tuple[int, ...]
    new_class_ids: Tuple[int, ...]


def encode_inline(pixels):
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    return INLINE_PREFIX + base64.b64encode(pixels.tobytes()).decode("ascii")


def validate_hierarchy(manifest):
    """Violations of the primary -> secondary -> final tree, as messages."""
    violations = []
    parent_of_final = {}
    parent_of_secondary = {}
    for c in manifest.classes:
        if any(not level.strip() for level in c.levels):
            violations.append(f"empty level name in class {c.class_id}")
            continue
        pair = (c.primary, c.secondary)
        seen = parent_of_final.setdefault(c.final, pair)
        if seen != pair:
            violations.append(
                f"hierarchy violation: final {c.final!r} appears under {seen} and {pair}"
            )
        seen_primary = parent_of_secondary.setdefault(c.secondary, c.primary)
        if seen_primary != c.primary:
            violations.append(
                f"hierarchy violation: secondary {c.secondary!r} appears under "
                f"{seen_primary!r} and {c.primary!r}"
            )
    return violations


def _require(cond, message):
    if not cond:
        raise ManifestError(message)


def manifest_from_dict(doc, root=None):
    _require(isinstance(doc, dict), "parse error: manifest must be an object")
    for key in ("name", "classes", "records"):
        _require(key in doc, f"parse error: missing key {key!r}")
    _require(isinstance(doc["name"], str), "parse error: name must be a string")
    classes = []
    for item in doc["classes"]:
        try:
            c = ClassDescriptor(int(item["class_id"]), str(item["primary"]),
                                str(item["secondary"]), str(item["final"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"parse error: bad class entry {item!r}") from exc
        _require(c.class_id >= 0, f"parse error: negative class_id {c.class_id}")
        classes.append(c)
    _require(len(classes) >= 2, "a manifest needs at least 2 classes")
    ids = [c.class_id for c in classes]
    _require(len(set(ids)) == len(ids), "parse error: duplicate class_id")
    finals = {}
    for c in classes:
        if c.final in finals:
            other = finals[c.final]
            if (other.primary, other.secondary) != (c.primary, c.secondary):
                raise ManifestError(
                    f"hierarchy violation: final {c.final!r} mapped to "
                    f"{(other.primary, other.secondary)} and {(c.primary, c.secondary)}"
                )
            raise ManifestError(f"duplicate final name {c.final!r}")
        finals[c.final] = c
    problems = validate_hierarchy(DatasetManifest(tuple(classes), ()))
    _require(not problems, "; ".join(problems))
    known = set(ids)
    records = []
    for item in doc["records"]:
        try:
            r = ImageRecord(str(item["image_ref"]), int(item["class_id"]),
                            int(item["height"]), int(item["width"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"parse error: bad record entry {item!r}") from exc
        _require(r.class_id in known, f"unresolved class: record references class_id {r.class_id}")
        _require(r.height >= 1 and r.width >= 1, f"record {r.image_ref[:40]!r}: height/width must be >= 1")
        records.append(r)
    return DatasetManifest(tuple(classes), tuple(records), doc["name"], root)


def load_manifest(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"parse error: {path}: {exc}") from exc
    return manifest_from_dict(doc, root=os.path.dirname(os.path.abspath(path)))


def make_base_new_split(manifest, base_fraction=Fraction(1, 2), ordering="alphabetical-by-final"):
    """First ceil(C * base_fraction) classes under ``ordering`` are base; the rest are new."""
    if ordering not in ORDERINGS:
        raise ValueError(f"unknown ordering {ordering!r}; expected one of {ORDERINGS}")
    C = len(manifest.classes)
    if C < 2:
        raise ValueError(f"need at least 2 classes to split, got {C}")
    # exact rational, so 0.5 * 12 is 6 and not 6.000000000000001
    frac = Fraction(base_fraction).limit_denominator(10**9)
    if not 0 < frac < 1:
        raise ValueError(f"base_fraction must lie in (0, 1), got {base_fraction}")
    n_base = math.ceil(C * frac)
    if n_base >= C:
        raise ValueError(f"base_fraction {base_fraction} leaves no new classes out of {C}")
    classes = list(manifest.classes)
    if ordering == "alphabetical-by-final":
        classes.sort(key=lambda c: (c.final, c.class_id))
    ids = [c.class_id for c in classes]
    return SplitSpec(tuple(ids[:n_base]), tuple(ids[n_base:]))
