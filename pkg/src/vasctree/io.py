"""Volume files (JSON header + raw little-endian data) and CSV tables.

Header keys::

    {"dims": [nx, ny, nz], "spacing_um": [sx, sy, sz], "dtype": "u8"|"u16"|"f32",
     "data": "<file name relative to the header>", "index_order": "x-fastest"}

Derived maps add ``"sentinel": -1.0`` for voxels outside their mask.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CorruptData, InvalidHeader, UnsupportedFormat
from .volume import BinaryMask, Volume3D

DTYPES = {"u8": np.dtype("<u1"), "u16": np.dtype("<u2"), "f32": np.dtype("<f4")}
INDEX_ORDER = "x-fastest"


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text: str) -> None:
    _atomic_write_bytes(Path(path), text.encode("utf-8"))


def write_json(path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dtype_code(values: np.ndarray) -> str:
    if values.dtype == bool or values.dtype == np.uint8:
        return "u8"
    if values.dtype == np.uint16:
        return "u16"
    if np.issubdtype(values.dtype, np.integer):
        if values.size == 0 or (values.min() >= 0 and values.max() <= 65535):
            return "u16"
    return "f32"


def data_path(header_path) -> Path:
    return Path(header_path).with_suffix(".raw")


def write_volume(vol: Volume3D, path, dtype: Optional[str] = None, extra: Optional[dict] = None) -> Path:
    """Write ``vol`` as ``<path>`` (header) plus ``<path stem>.raw``; returns the header path."""
    path = Path(path)
    code = dtype or _dtype_code(vol.values)
    if code not in DTYPES:
        raise UnsupportedFormat(f"unknown dtype {code!r}")
    raw = data_path(path)
    arr = np.asarray(vol.values).astype(DTYPES[code])
    _atomic_write_bytes(raw, arr.ravel(order="F").tobytes())
    header = {
        "dims": list(vol.dims),
        "spacing_um": list(vol.spacing),
        "dtype": code,
        "data": raw.name,
        "index_order": INDEX_ORDER,
    }
    if extra:
        header.update(extra)
    write_json(path, header)
    return path


def write_mask(mask: BinaryMask, path) -> Path:
    return write_volume(Volume3D(mask.membership.astype(np.uint8), mask.spacing), path, "u8",
                        {"kind": "mask"})


def read_header(path) -> dict:
    try:
        header = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidHeader(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(header, dict):
        raise InvalidHeader(f"{path}: header must be a JSON object")
    dims = header.get("dims")
    if (not isinstance(dims, list) or len(dims) != 3
            or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in dims)):
        raise InvalidHeader(f"{path}: dims must be three positive integers, got {dims!r}")
    spacing = header.get("spacing_um", [20.0, 20.0, 20.0])
    if (not isinstance(spacing, list) or len(spacing) != 3
            or not all(isinstance(s, (int, float)) and math.isfinite(s) and s > 0 for s in spacing)):
        raise InvalidHeader(f"{path}: spacing_um must be three positive numbers, got {spacing!r}")
    if header.get("dtype") not in DTYPES:
        raise UnsupportedFormat(f"{path}: unsupported dtype {header.get('dtype')!r}")
    order = header.get("index_order", INDEX_ORDER)
    if order != INDEX_ORDER:
        raise UnsupportedFormat(f"{path}: unsupported index order {order!r}")
    if not isinstance(header.get("data"), str):
        raise InvalidHeader(f"{path}: missing data file name")
    return header


def read_volume(path) -> Volume3D:
    path = Path(path)
    header = read_header(path)
    dt = DTYPES[header["dtype"]]
    raw = path.parent / header["data"]
    buf = raw.read_bytes()
    nx, ny, nz = header["dims"]
    expected = nx * ny * nz * dt.itemsize
    if len(buf) != expected:
        raise CorruptData(f"{raw}: expected {expected} bytes, found {len(buf)}")
    values = np.frombuffer(buf, dtype=dt).reshape((nx, ny, nz), order="F")
    return Volume3D(values.astype(dt.newbyteorder("=")), tuple(float(s) for s in header["spacing_um"]))


def read_mask(path) -> BinaryMask:
    vol = read_volume(path)
    vals = vol.values
    if not np.isin(vals, (0, 1)).all():
        raise CorruptData(f"{path}: mask values must be 0 or 1")
    return BinaryMask(vals.astype(bool), vol.spacing)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def fmt(x) -> str:
    """Deterministic, round-trippable text for a CSV cell."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(columns)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    write_text(path, "\n".join(lines) + "\n")


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
