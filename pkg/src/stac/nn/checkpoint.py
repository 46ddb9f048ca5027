"""Flat binary parameter checkpoints with a JSON manifest.

`params.bin` holds, per array: uint32 ndim, ndim x uint64 dims, then the
row-major little-endian values. `manifest.json` lists names, shapes, dtype and
byte offsets, plus free-form metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np


def save_checkpoint(directory: str | Path, arrays: Mapping[str, np.ndarray],
                    meta: Mapping[str, Any] | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    with open(d / "params.bin", "wb") as f:
        for name, arr in arrays.items():
            arr = np.asarray(arr, order="C")  # ascontiguousarray would turn 0-d into 1-d
            dt = arr.dtype.newbyteorder("<")
            offset = f.tell()
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.astype(dt, copy=False).tobytes(order="C"))
            entries.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str,
                            "offset": offset})
    manifest = {"format": "stac-params-v1", "arrays": entries, "meta": dict(meta or {})}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return d


def load_checkpoint(directory: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    raw = (d / "params.bin").read_bytes()
    out = {}
    for e in manifest["arrays"]:
        pos = e["offset"]
        (ndim,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", raw, pos)
        pos += 8 * ndim
        if list(shape) != e["shape"]:
            raise ValueError(f"header shape {shape} disagrees with manifest for {e['name']}")
        dt = np.dtype(e["dtype"]).newbyteorder("<")
        n = int(np.prod(shape)) if ndim else 1
        out[e["name"]] = np.frombuffer(raw, dtype=dt, count=n, offset=pos).reshape(shape).astype(
            np.dtype(e["dtype"]))
    return out, manifest["meta"]
