"""Versioned binary parameter container with a JSON manifest.

Byte layout (all integers little-endian)::

    magic      8 bytes   b"ADGSCKPT"
    version    u32       FORMAT_VERSION
    count      u32       number of entries
    entry * count:
        name_len   u16
        name       name_len bytes, UTF-8
        precision  u8        0 = single32 (<f4), 1 = half16 (<f2)
        ndim       u8
        dims       u32 * ndim
        nbytes     u64
        payload    nbytes, C order, little-endian

The manifest ``<file>.json`` lists the entries, the model configuration and
the SHA-256 of the binary file.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"ADGSCKPT"
FORMAT_VERSION = 1
_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f2")}
_NAMES = {0: "single32", 1: "half16"}


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _code(arr: np.ndarray) -> int:
    if arr.dtype == np.float32:
        return 0
    if arr.dtype == np.float16:
        return 1
    raise CheckpointError(f"unsupported dtype {arr.dtype}")


def encode(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        code = _code(arr)
        raw = name.encode("utf-8")
        payload = np.ascontiguousarray(arr, dtype=_CODES[code]).tobytes()
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<BB", code, arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape), struct.pack("<Q", len(payload)), payload]
    return b"".join(parts)


def decode(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out = {}
    for _ in range(count):
        (n,) = take("<H")
        if pos + n > len(blob):
            raise CheckpointError("truncated checkpoint")
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        code, ndim = take("<BB")
        if code not in _CODES:
            raise CheckpointError(f"{name}: unknown precision code {code}")
        dims = take(f"<{ndim}I")
        (nbytes,) = take("<Q")
        dtype = _CODES[code]
        if nbytes != int(np.prod(dims, dtype=np.int64)) * dtype.itemsize or pos + nbytes > len(blob):
            raise CheckpointError(f"{name}: payload size does not match its shape")
        out[name] = np.frombuffer(blob, dtype=dtype, count=nbytes // dtype.itemsize, offset=pos).reshape(dims)
        out[name] = out[name].astype(dtype.newbyteorder("="))
        pos += nbytes
    if pos != len(blob):
        raise CheckpointError("trailing bytes after the last entry")
    return out


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> dict:
    path = Path(path)
    blob = encode(tensors)
    path.write_bytes(blob)
    manifest = {
        "format": "adgsyn-checkpoint",
        "version": FORMAT_VERSION,
        "file": path.name,
        "sha256": hashlib.sha256(blob).hexdigest(),
        "entries": [{"name": k, "shape": list(np.shape(v)), "precision": _NAMES[_code(np.asarray(v))]}
                    for k, v in tensors.items()],
        **(meta or {}),
    }
    manifest_path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def load_checkpoint(path, verify: bool = True):
    """Return ``(tensors, manifest)``; the manifest is ``{}`` if it is absent."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    mpath = manifest_path(path)
    manifest = json.loads(mpath.read_text(encoding="utf-8")) if mpath.exists() else {}
    if verify and manifest and hashlib.sha256(blob).hexdigest() != manifest.get("sha256"):
        raise CheckpointError(f"{path}: checksum does not match manifest")
    return decode(blob), manifest
