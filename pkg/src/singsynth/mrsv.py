"""Binary tensor container used for features, embeddings and checkpoints.

Two layouts share the ``MRSV`` magic:

* single tensor:  magic, dtype code, ndim, dims (u32 each), raw payload
* named bundle:   magic, code 0xFF, JSON metadata blob, entry count, then
  per entry a name followed by the single-tensor fields

Everything is little-endian. Files are bit-exact: writing an array and
reading it back reproduces the same bytes, which the corpus round-trip
invariants rely on.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MRSV"
BUNDLE_CODE = 0xFF

_DTYPE_BY_CODE = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<i4"),
    3: np.dtype("<i8"),
}
_CODE_BY_KIND = {
    ("f", 4): 0,
    ("f", 8): 1,
    ("i", 4): 2,
    ("i", 8): 3,
}


class MrsvFormatError(ValueError):
    """Raised when a file is not a well-formed tensor container."""


def _dtype_code(array: np.ndarray) -> int:
    key = (array.dtype.kind, array.dtype.itemsize)
    if key not in _CODE_BY_KIND:
        raise MrsvFormatError(f"unsupported dtype {array.dtype}")
    return _CODE_BY_KIND[key]


def _pack_tensor(array: np.ndarray) -> bytes:
    if array.ndim:
        array = np.ascontiguousarray(array)
    if array.ndim > 255:
        raise MrsvFormatError("too many dimensions")
    code = _dtype_code(array)
    head = struct.pack("<BB", code, array.ndim)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    payload = array.astype(_DTYPE_BY_CODE[code], copy=False).tobytes()
    return head + dims + payload


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MrsvFormatError(f"{self.path}: truncated file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_tensor_body(r: _Reader, code: int) -> np.ndarray:
    if code not in _DTYPE_BY_CODE:
        raise MrsvFormatError(f"{r.path}: unknown dtype code {code}")
    dtype = _DTYPE_BY_CODE[code]
    (ndim,) = r.unpack("<B")
    dims = r.unpack(f"<{ndim}I") if ndim else ()
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    raw = r.take(count * dtype.itemsize)
    return np.frombuffer(raw, dtype=dtype).reshape(dims).copy()


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write a single numpy array (float32/64, int32/64)."""
    Path(path).write_bytes(MAGIC + _pack_tensor(np.asarray(array)))


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != MAGIC:
        raise MrsvFormatError(f"{path}: bad magic")
    (code,) = r.unpack("<B")
    if code == BUNDLE_CODE:
        raise MrsvFormatError(f"{path}: file is a named bundle, not a single tensor")
    out = _read_tensor_body(r, code)
    if r.pos != len(r.data):
        raise MrsvFormatError(f"{path}: trailing bytes")
    return out


def write_bundle(
    path: str | Path,
    tensors: dict[str, np.ndarray],
    meta: dict | None = None,
) -> None:
    """Write a named tensor map with an optional JSON metadata header."""
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<B", BUNDLE_CODE)]
    parts.append(struct.pack("<I", len(blob)))
    parts.append(blob)
    parts.append(struct.pack("<I", len(tensors)))
    for name, array in tensors.items():
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise MrsvFormatError(f"name too long: {name!r}")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(_pack_tensor(np.asarray(array)))
    Path(path).write_bytes(b"".join(parts))


def read_bundle(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a named tensor map; returns (tensors, metadata)."""
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != MAGIC:
        raise MrsvFormatError(f"{path}: bad magic")
    (code,) = r.unpack("<B")
    if code != BUNDLE_CODE:
        raise MrsvFormatError(f"{path}: file is a single tensor, not a bundle")
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise MrsvFormatError(f"{path}: bad metadata JSON: {exc}") from exc
    (count,) = r.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (tcode,) = r.unpack("<B")
        tensors[name] = _read_tensor_body(r, tcode)
    if r.pos != len(r.data):
        raise MrsvFormatError(f"{path}: trailing bytes")
    return tensors, meta
