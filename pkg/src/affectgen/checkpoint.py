"""Checkpoint container: one JSON header plus named float32 tensors.

Layout: 4-byte magic, little-endian u64 header length, UTF-8 JSON header,
then the raw tensor payloads concatenated in header order. Every tensor is
little-endian float32 with its shape declared in the header, so files are
readable without this library and byte-identical for identical state.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"AGC1"
FORMAT_VERSION = 1

_LEN = struct.Struct("<Q")


def save_checkpoint(path: Path, header: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write atomically (temp file + rename). ``header`` must be JSON-safe;
    the tensor manifest is added under the reserved key ``tensors``."""
    if "tensors" in header:
        raise ValueError("header key 'tensors' is reserved")
    names = list(tensors)
    full = dict(header)
    full["format_version"] = FORMAT_VERSION
    full["tensors"] = [{"name": n, "shape": list(tensors[n].shape)} for n in names]
    blob = json.dumps(full, sort_keys=True).encode("utf-8")

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(blob)))
        fh.write(blob)
        for name in names:
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            fh.write(arr.tobytes())
    tmp.replace(path)


def load_checkpoint(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read header and tensors; errors name the offending tensor."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + _LEN.size or data[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    (header_len,) = _LEN.unpack_from(data, offset)
    offset += _LEN.size
    if offset + header_len > len(data):
        raise ValueError(f"{path}: truncated header")
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: corrupt header: {exc}") from exc
    offset += header_len

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version {version!r} "
                         f"(expected {FORMAT_VERSION})")
    tensors: dict[str, np.ndarray] = {}
    for entry in header.get("tensors", []):
        name = entry["name"]
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64)) if shape else 4
        if offset + nbytes > len(data):
            raise ValueError(f"{path}: tensor {name!r} is truncated "
                             f"(need {nbytes} bytes at offset {offset})")
        tensors[name] = np.frombuffer(
            data, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes after tensors")
    return header, tensors
