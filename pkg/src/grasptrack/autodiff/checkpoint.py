"""Binary parameter checkpoints.

Layout (all integers little-endian uint32):

    magic b"GTCK" | version | meta_len | meta (UTF-8 JSON) | count
    then per entry: name_len | name (UTF-8) | rank | dims[rank] | float32 data

The meta blob carries the model configuration so a checkpoint is
self-describing; parameters round-trip losslessly as float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GTCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_params(path, params: dict, meta: dict | None = None) -> None:
    """Write named arrays (Tensor or ndarray values) plus a JSON meta blob."""
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    items = []
    for name, value in params.items():
        # note: ascontiguousarray would promote 0-d to 1-d; tobytes() below
        # already emits C order, so a plain dtype view is enough
        arr = np.asarray(getattr(value, "data", value), dtype="<f4")
        items.append((name, arr))
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(items)))
        for name, arr in items:
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as {name: float32 ndarray} plus its meta dict."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic in {path}: not a parameter checkpoint")
    off = 4
    version, meta_len = struct.unpack_from("<II", blob, off)
    off += 8
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} in {path}")
    meta = json.loads(blob[off : off + meta_len].decode("utf-8")) if meta_len else {}
    off += meta_len
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims).copy()
        off += 4 * n
        params[name] = arr
    if off != len(blob):
        raise CheckpointError(f"trailing bytes in {path}; file corrupt?")
    return params, meta
