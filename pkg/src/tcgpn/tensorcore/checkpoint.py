"""Binary checkpoint format.

Layout: magic bytes "TCGPN001", a little-endian uint32 header length, a
UTF-8 JSON header {"config": ..., "entries": [{path, shape, dtype, offset}]},
then the raw little-endian parameter values. Offsets index into the payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .params import ParamStore

MAGIC = b"TCGPN001"

_DTYPE_CODES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def save_checkpoint(path: str | Path, params: ParamStore, config: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for p, t in params.items():
        code = "<f8" if t.data.dtype == np.float64 else "<f4"
        raw = np.ascontiguousarray(t.data, dtype=_DTYPE_CODES[code]).tobytes()
        entries.append({"path": p, "shape": list(t.shape), "dtype": code, "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"config": config, "entries": entries}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> tuple[ParamStore, dict | None]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for entry in header["entries"]:
        dtype = _DTYPE_CODES[entry["dtype"]]
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        stop = start + n * dtype.itemsize
        if stop > len(payload):
            raise ValueError(f"checkpoint truncated at {entry['path']}")
        arr = np.frombuffer(payload[start:stop], dtype=dtype).reshape(shape)
        arrays[entry["path"]] = arr
    store = ParamStore.from_arrays(arrays)
    return store, header.get("config")
