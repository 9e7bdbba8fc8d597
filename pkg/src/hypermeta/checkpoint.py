"""Binary parameter checkpoints.

Layout (little-endian)::

    b"STHM1"
    u32 entry count
    per entry: u16 name length, UTF-8 name, u8 ndim, u32 * ndim shape,
               float64 values in row-major order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import ParamSet

MAGIC = b"STHM1"


class CheckpointError(ValueError):
    pass


def dumps(params: ParamSet) -> bytes:
    out = [MAGIC, struct.pack("<I", len(params))]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def loads(blob: bytes) -> ParamSet:
    if not blob.startswith(MAGIC):
        raise CheckpointError("missing STHM1 header")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    (count,) = take("<I")
    values = {}
    for _ in range(count):
        (nlen,) = take("<H")
        if pos + nlen > len(blob):
            raise CheckpointError("truncated checkpoint")
        name = blob[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        nbytes = 8 * n
        if pos + nbytes > len(blob):
            raise CheckpointError("truncated checkpoint")
        values[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape)
        pos += nbytes
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last entry")
    return ParamSet(values)


def save(params: ParamSet, path) -> Path:
    path = Path(path)
    path.write_bytes(dumps(params))
    return path


def load(path) -> ParamSet:
    return loads(Path(path).read_bytes())
