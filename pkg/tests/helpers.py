import numpy as np

from shipprompt.taxonomy import ClassDescriptor, DatasetManifest, ImageRecord, encode_inline


def tiny_manifest(n_classes=2, per_class=2, size=32, seed=0):
    rng = np.random.default_rng(seed)
    classes = tuple(ClassDescriptor(i, f"p{i % 2}", f"s{i}", f"f{i}") for i in range(n_classes))
    records = tuple(
        ImageRecord(encode_inline(rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)), c.class_id, size, size)
        for c in classes for _ in range(per_class)
    )
    return DatasetManifest(classes, records, "tiny")
