"""Versioned binary checkpoint container.

Layout (all integers little-endian):
  magic       12 bytes  b"CELLMIXCKPT\\0"
  version     uint32    currently 1
  meta_len    uint32    followed by a UTF-8 JSON metadata blob (model kind,
                        noise-schedule parameters, config echo, ...)
  n_entries   uint32
  per entry:  name_len uint16, name UTF-8, dtype code uint8
              (0=float32, 1=float64, 2=int64), ndim uint8,
              dims uint32 each, then the raw little-endian array bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"CELLMIXCKPT\x00"
VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("<i8"): 2}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}


def save_checkpoint(path, state: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta_blob = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)
        fh.write(struct.pack("<I", len(state)))
        for name, array in state.items():
            arr = np.ascontiguousarray(array)
            little = arr.dtype.newbyteorder("<")
            if little not in _DTYPE_CODES:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
            arr = arr.astype(little, copy=False)
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<BB", _DTYPE_CODES[little], arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC), "magic") != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        try:
            metadata = json.loads(_read_exact(fh, meta_len, "metadata").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt metadata: {exc}") from exc
        (n_entries,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))
        state: dict[str, np.ndarray] = {}
        for _ in range(n_entries):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            code, ndim = struct.unpack("<BB", _read_exact(fh, 2, "dtype/ndim"))
            if code not in _CODE_DTYPES:
                raise CheckpointError(f"{path}: unknown dtype code {code}")
            shape = tuple(struct.unpack("<I", _read_exact(fh, 4, "dim"))[0]
                          for _ in range(ndim))
            dtype = _CODE_DTYPES[code]
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, count * dtype.itemsize, f"data of {name!r}")
            state[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return metadata, state
