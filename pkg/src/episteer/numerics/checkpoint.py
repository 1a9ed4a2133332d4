"""Flat named-tensor checkpoints.

Binary layout (little endian)::

    b"EPST" | u32 version | u32 count
    count x [u16 name_len | name utf-8 | u8 ndim | ndim x u32 dims | float64 payload]

A sibling ``<stem>.json`` manifest lists name -> shape plus free-form metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EPST"
VERSION = 1


def manifest_path(path):
    path = Path(path)
    return path.with_suffix(".json")


def save_tensors(path, tensors, meta=None):
    """Write ``{name: array}`` to ``path`` and its JSON manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.array(arr, dtype="<f8", order="C")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    manifest = {
        "format": "episteer-tensors",
        "version": VERSION,
        "tensors": {name: list(np.shape(arr)) for name, arr in tensors.items()},
        "meta": meta or {},
    }
    manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_tensors(path):
    """Returns ``(tensors, meta)``; shapes are cross-checked against the manifest."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path} is not an episteer checkpoint")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + n].decode("utf-8")
        off += n
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
    meta = {}
    mpath = manifest_path(path)
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
        for name, shape in manifest["tensors"].items():
            if name not in out or list(out[name].shape) != list(shape):
                raise ValueError(f"manifest disagrees with payload for {name}")
        meta = manifest.get("meta", {})
    return out, meta
