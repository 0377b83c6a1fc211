"""Flat binary tensor container and checkpoint directories.

Container layout:
  bytes 0..3    magic b"DCK1"
  bytes 4..7    dtype code, little-endian u32 (1 = float32, 2 = float64)
  bytes 8..11   rank, little-endian u32
  bytes 12..15  reserved, zero
  then rank * u64 little-endian shape entries
  then the raw little-endian scalars, C order
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"DCK1"
_DTYPE_TO_CODE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_CODE_TO_DTYPE = {v: k for k, v in _DTYPE_TO_CODE.items()}


class ContainerError(ValueError):
    """Raised for malformed tensor container files."""


def dump_tensor(arr: np.ndarray, fh) -> None:
    dtype = np.dtype(arr.dtype)
    if dtype not in _DTYPE_TO_CODE:
        raise ContainerError(f"unsupported dtype {dtype}")
    fh.write(MAGIC)
    fh.write(struct.pack("<II4x", _DTYPE_TO_CODE[dtype], arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(np.ascontiguousarray(arr).astype(dtype.newbyteorder("<")).tobytes())


def save_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        dump_tensor(arr, fh)


def read_tensor(fh) -> np.ndarray:
    head = fh.read(16)
    if len(head) != 16 or head[:4] != MAGIC:
        raise ContainerError("bad magic: not a DCK1 tensor container")
    code, rank = struct.unpack("<II4x", head[4:])
    if code not in _CODE_TO_DTYPE:
        raise ContainerError(f"unknown dtype code {code}")
    if rank > 8:
        raise ContainerError(f"implausible rank {rank}")
    shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
    dtype = _CODE_TO_DTYPE[code]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    raw = fh.read(count * dtype.itemsize)
    if len(raw) != count * dtype.itemsize:
        raise ContainerError("truncated tensor payload")
    arr = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype)
    return arr.reshape(shape)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def save_checkpoint(directory, named_params) -> None:
    """Write one container per parameter plus a manifest of names/shapes."""
    os.makedirs(directory, exist_ok=True)
    manifest = {}
    for idx, (name, arr) in enumerate(named_params):
        fname = f"p{idx:04d}.dck"
        save_tensor(os.path.join(directory, fname), arr)
        manifest[name] = {"file": fname, "shape": list(arr.shape), "dtype": str(arr.dtype)}
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_checkpoint(directory) -> dict:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    out = {}
    for name, meta in manifest.items():
        arr = load_tensor(os.path.join(directory, meta["file"]))
        if list(arr.shape) != meta["shape"]:
            raise ContainerError(f"checkpoint shape mismatch for {name}")
        out[name] = arr
    return out
