"""Binary weights file.

Layout (all integers unsigned 32-bit little-endian, floats IEEE-754 binary64
little-endian)::

    8 bytes   magic  b"LPWEIGHT"
    u32       format version (1)
    u32       length of the spec echo in bytes
    ...       spec echo: UTF-8 JSON of the NetworkSpec fields
    u32       number of matrices
    per matrix, W_0..W_H then U_0..U_{H-1}:
        1 byte  kind (b"W" or b"U")
        u32     layer index
        u32     rows
        u32     cols
        ...     rows*cols float64 values, row-major
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict

import numpy as np

from .architectures import NetworkSpec
from .core import WeightStore

MAGIC = b"LPWEIGHT"
VERSION = 1


class WeightsFileError(ValueError):
    pass


def dumps(spec: NetworkSpec, weights: WeightStore) -> bytes:
    echo = json.dumps(asdict(spec), sort_keys=True).encode("utf-8")
    mats = [(b"W", l, weights.w[l]) for l in sorted(weights.w)]
    mats += [(b"U", l, weights.u[l]) for l in sorted(weights.u)]
    chunks = [MAGIC, struct.pack("<II", VERSION, len(echo)), echo, struct.pack("<I", len(mats))]
    for kind, layer, m in mats:
        m = np.ascontiguousarray(m, dtype="<f8")
        chunks.append(kind + struct.pack("<III", layer, *m.shape))
        chunks.append(m.tobytes(order="C"))
    return b"".join(chunks)


def loads(blob: bytes):
    """Return ``(NetworkSpec, WeightStore)``."""
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise WeightsFileError("truncated weights file")
        out = view[pos:pos + n]
        pos += n
        return bytes(out)

    if take(len(MAGIC)) != MAGIC:
        raise WeightsFileError("not a weights file (bad magic)")
    version, echo_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise WeightsFileError(f"unsupported weights file version {version}")
    try:
        fields = json.loads(take(echo_len).decode("utf-8"))
        spec = NetworkSpec(**fields)
    except (ValueError, TypeError) as err:
        raise WeightsFileError(f"bad spec echo: {err}")
    (count,) = struct.unpack("<I", take(4))
    store = WeightStore({}, {})
    for _ in range(count):
        kind = take(1)
        layer, rows, cols = struct.unpack("<III", take(12))
        data = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
        if kind == b"W":
            store.w[layer] = data.astype(np.float64)
        elif kind == b"U":
            store.u[layer] = data.astype(np.float64)
        else:
            raise WeightsFileError(f"unknown matrix kind {kind!r}")
    if pos != len(view):
        raise WeightsFileError("trailing bytes after last matrix")
    return spec, store


def save(path, spec: NetworkSpec, weights: WeightStore) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(spec, weights))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
