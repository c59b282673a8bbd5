"""Self-describing binary tensor files and JSON reports.

Tensor layout (little-endian throughout): 4-byte magic "MCBM", version
byte 1, dtype byte (0 = float32, 1 = uint8), ndim byte (2 or 3), ndim
uint32 dims, then the row-major payload. Label grids are uint8 2D files;
predictions are float32 (N, H, W) files validated against the per-pixel
simplex invariant.

Reports are JSON with sorted keys and round-trip float precision, so
identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import SIMPLEX_TOL, GridError, LabelGrid, MulticlassPrediction

MAGIC = b"MCBM"
VERSION = 1
DTYPE_F32 = 0
DTYPE_U8 = 1

REPORT_SCHEMA_VERSION = 1


class TensorFormatError(ValueError):
    """Malformed tensor file."""


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TensorFormatError(
            f"truncated file: expected {n} bytes for {what}, got {len(data)}"
        )
    return data


def read_raw_tensor(path) -> np.ndarray:
    """Read any well-formed tensor file without semantic validation."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise TensorFormatError(
                f"bad magic {magic!r}, expected {MAGIC!r}"
            )
        version, dtype_code, ndim = _read_exact(fh, 3, "header")
        if version != VERSION:
            raise TensorFormatError(f"unsupported version {version}")
        if dtype_code not in (DTYPE_F32, DTYPE_U8):
            raise TensorFormatError(f"unknown dtype code {dtype_code}")
        if ndim not in (2, 3):
            raise TensorFormatError(f"ndim must be 2 or 3, got {ndim}")
        dims = struct.unpack(
            "<" + "I" * ndim, _read_exact(fh, 4 * ndim, "dims")
        )
        if any(d == 0 for d in dims):
            raise TensorFormatError(f"zero-sized dimension in {dims}")
        count = int(np.prod(dims))
        itemsize = 4 if dtype_code == DTYPE_F32 else 1
        payload = fh.read()
    expected = count * itemsize
    if len(payload) != expected:
        raise TensorFormatError(
            f"payload length mismatch: expected {expected} bytes "
            f"({dims}), got {len(payload)}"
        )
    dtype = np.dtype("<f4") if dtype_code == DTYPE_F32 else np.dtype("u1")
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    if dtype_code == DTYPE_F32 and not np.all(np.isfinite(arr)):
        raise TensorFormatError("float payload contains non-finite values")
    return arr


def read_tensor(path) -> MulticlassPrediction | LabelGrid:
    """Read labels (uint8 2D) or a prediction (float32 3D, simplex-checked)."""
    arr = read_raw_tensor(path)
    if arr.dtype == np.uint8:
        if arr.ndim != 2:
            raise TensorFormatError("labels must be 2D")
        return LabelGrid(arr.astype(np.int64))
    if arr.ndim != 3:
        raise TensorFormatError("predictions must be 3D (classes, H, W)")
    values = arr.astype(np.float64)
    sums = values.sum(axis=0)
    dev = np.abs(sums - 1.0)
    if dev.max() > SIMPLEX_TOL:
        y, x = np.unravel_index(int(dev.argmax()), dev.shape)
        raise TensorFormatError(
            f"simplex violation: channel sum at worst pixel (x={x}, y={y}) "
            f"is {sums[y, x]!r}"
        )
    try:
        return MulticlassPrediction(values)
    except GridError as exc:
        raise TensorFormatError(str(exc)) from exc


def write_tensor(path, array: np.ndarray) -> None:
    """Write a float32 (2D/3D) or uint8 (2D) tensor file."""
    arr = np.asarray(array)
    if arr.ndim not in (2, 3):
        raise TensorFormatError(f"tensors must be 2D or 3D, got {arr.ndim}D")
    if np.issubdtype(arr.dtype, np.integer):
        if arr.min() < 0 or arr.max() > 255:
            raise TensorFormatError("integer payload must fit uint8")
        payload = arr.astype("u1")
        dtype_code = DTYPE_U8
    else:
        payload = arr.astype("<f4")
        dtype_code = DTYPE_F32
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION, dtype_code, arr.ndim]))
        fh.write(struct.pack("<" + "I" * arr.ndim, *arr.shape))
        fh.write(payload.tobytes(order="C"))


def report_to_bytes(payload: dict) -> bytes:
    return (
        json.dumps(payload, sort_keys=True, indent=1, allow_nan=False) + "\n"
    ).encode()


def write_report(path, payload: dict) -> None:
    """Serialize a report deterministically with round-trip precision."""
    Path(path).write_bytes(report_to_bytes(payload))


def read_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
