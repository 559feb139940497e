"""Minimal reader/writer for binary portable anymaps (P5 graymap, P6 pixmap)."""
import re

import numpy as np

_HEADER = re.compile(rb"(P[56])\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def read_pnm(path):
    """Return uint8 pixels: (H, W) for P5, (H, W, 3) for P6."""
    with open(path, "rb") as fh:
        data = fh.read()
    m = _HEADER.match(data)
    if m is None:
        raise ValueError(f"{path}: not a binary P5/P6 file")
    kind, width, height, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit maxval 255 is supported")
    channels = 3 if kind == b"P6" else 1
    body = data[m.end() : m.end() + width * height * channels]
    if len(body) != width * height * channels:
        raise ValueError(f"{path}: truncated pixel data")
    arr = np.frombuffer(body, dtype=np.uint8)
    return arr.reshape(height, width, 3) if channels == 3 else arr.reshape(height, width)


def write_pnm(path, pixels):
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise ValueError("pixels must be uint8")
    if pixels.ndim == 2:
        kind = b"P5"
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        kind = b"P6"
    else:
        raise ValueError(f"unsupported pixel shape {pixels.shape}")
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"%s\n%d %d\n255\n" % (kind, w, h))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def quantize_unit(values):
    """Map values in [0, 1] to uint8 with round-half-up."""
    values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(values * 255.0 + 0.5).astype(np.uint8)
