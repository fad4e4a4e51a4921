"""Shared little-endian binary container for embedding artifacts.

Layout: magic(4) | version u32 | header_len u32 | header json (utf-8) |
array payloads in header order, float32 little-endian, row-major. The
header carries an ``"arrays": [[name, shape], ...]`` manifest.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from ..errors import ValidationError


def binary_bytes(
    magic: bytes,
    version: int,
    header: dict,
    arrays: Sequence[Tuple[str, np.ndarray]],
) -> bytes:
    header = dict(header)
    header["arrays"] = [[name, list(arr.shape)] for name, arr in arrays]
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    chunks = [magic, struct.pack("<II", version, len(blob)), blob]
    chunks.extend(np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in arrays)
    return b"".join(chunks)


def write_binary(
    path: str | Path,
    magic: bytes,
    version: int,
    header: dict,
    arrays: Sequence[Tuple[str, np.ndarray]],
) -> None:
    Path(path).write_bytes(binary_bytes(magic, version, header, arrays))


def parse_binary(raw: bytes, magic: bytes, version: int, origin: str = "<bytes>"):
    if raw[:4] != magic:
        raise ValidationError(f"{origin}: bad magic {raw[:4]!r}, expected {magic!r}")
    file_version, header_len = struct.unpack("<II", raw[4:12])
    if file_version != version:
        raise ValidationError(
            f"{origin}: format version {file_version}, reader supports {version}"
        )
    header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    offset = 12 + header_len
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(raw):
            raise ValidationError(f"{origin}: truncated array payload for {name}")
        arrays[name] = np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape).copy()
        offset = end
    return header, arrays


def read_binary(path: str | Path, magic: bytes, version: int):
    return parse_binary(Path(path).read_bytes(), magic, version, origin=str(path))
