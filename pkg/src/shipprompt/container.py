"""Binary array container shared by encoder weights and training checkpoints.

Layout (all integers unsigned 64-bit little-endian)::

    b"HPMT1"
    count
    count x { name_len, name (UTF-8), rank, dims[rank], payload (f64 LE, row-major) }
"""
import struct

import numpy as np

MAGIC = b"HPMT1"
_U64 = struct.Struct("<Q")


class ContainerError(ValueError):
    pass


def write_arrays(path, arrays):
    """Write an ordered mapping of name -> array to ``path``."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_U64.pack(len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(_U64.pack(len(raw)))
            fh.write(raw)
            fh.write(_U64.pack(arr.ndim))
            for dim in arr.shape:
                fh.write(_U64.pack(dim))
            fh.write(np.ascontiguousarray(arr).tobytes())


def read_arrays(path):
    """Read a container back into a dict of float64 arrays (insertion ordered)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"bad container: {path} does not start with {MAGIC!r}")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise EOFError
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    try:
        (count,) = _U64.unpack(take(8))
    except EOFError:
        raise ContainerError(f"bad container: {path} has no array count") from None
    out = {}
    for i in range(count):
        try:
            (name_len,) = _U64.unpack(take(8))
            name = take(name_len).decode("utf-8")
            (rank,) = _U64.unpack(take(8))
            shape = tuple(_U64.unpack(take(8))[0] for _ in range(rank))
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            arr = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
        except EOFError:
            raise ContainerError(
                f"missing array: {path} ends after {i} of {count} arrays"
            ) from None
        out[name] = arr
    return out
