"""Named-tensor archive: a single file holding a JSON manifest followed by
concatenated raw row-major little-endian tensor blobs.

Layout:
    8 bytes   little-endian uint64: manifest length in bytes
    manifest  UTF-8 JSON: {"tensors": [{name, shape, dtype, offset, nbytes},
              ...], "meta": {...}}
    blobs     tensor data, offsets relative to the end of the manifest

dtype tags are "f32" and "f64". The format round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC_LEN = 8
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def save_archive(path: str | Path, tensors: dict[str, np.ndarray],
                 meta: dict | None = None, dtype: str | None = None) -> None:
    """Write tensors under their names. ``dtype`` forces a storage type for
    every tensor; by default float64 arrays are stored as f64 and everything
    else as f32."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        tag = dtype or ("f64" if arr.dtype == np.float64 else "f32")
        if tag not in _DTYPES:
            raise ValueError(f"unsupported dtype tag {tag!r}")
        data = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": tag,
            "offset": offset,
            "nbytes": len(data),
        })
        blobs.append(data)
        offset += len(data)
    manifest = json.dumps({"tensors": entries, "meta": meta or {}}).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_archive(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (tensors, meta)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such archive: {path}")
    raw = path.read_bytes()
    if len(raw) < MAGIC_LEN:
        raise ValueError(f"truncated archive: {path}")
    (mlen,) = struct.unpack("<Q", raw[:MAGIC_LEN])
    try:
        manifest = json.loads(raw[MAGIC_LEN:MAGIC_LEN + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"corrupt archive manifest in {path}: {exc}") from None
    blob_start = MAGIC_LEN + mlen
    tensors = {}
    for entry in manifest["tensors"]:
        dt = _DTYPES.get(entry["dtype"])
        if dt is None:
            raise ValueError(f"unsupported dtype tag {entry['dtype']!r}")
        lo = blob_start + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(raw):
            raise ValueError(f"archive blob out of bounds for tensor {entry['name']!r}")
        arr = np.frombuffer(raw[lo:hi], dtype=dt).reshape(entry["shape"]).copy()
        tensors[entry["name"]] = arr
    return tensors, manifest.get("meta", {})
