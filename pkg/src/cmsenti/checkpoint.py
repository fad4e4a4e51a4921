"""Single-file binary checkpoints with integrity and identity checks.

Layout: magic ``CMS1`` | version u32 LE | crc32 u32 LE | payload_len u64 LE
| payload. The payload is a json header (configs, label schema, history,
rng state, component hashes, parameter manifest) followed by the raw
float32 parameter buffers in manifest order. The crc32 covers the whole
payload, so any truncation or corruption is detected at load.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .corpus import LabelSchema
from .errors import ChecksumError, CheckpointError, VersionMismatchError
from .model import ModelConfig, ModelParams
from .numeric import Tensor

MAGIC = b"CMS1"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ModelParams
    schema: LabelSchema
    history: List[dict] = field(default_factory=list)
    component_hashes: Dict[str, str] = field(default_factory=dict)
    rng_state: Optional[dict] = None


def component_hash(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    manifest = []
    buffers = []
    for name, tensor in ckpt.params.items():
        manifest.append({"name": name, "shape": list(tensor.shape)})
        buffers.append(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    header = {
        "model_config": ckpt.config.to_dict(),
        "schema": {"labels": list(ckpt.schema.labels), "language_tag": ckpt.schema.language_tag},
        "history": ckpt.history,
        "component_hashes": ckpt.component_hashes,
        "rng_state": ckpt.rng_state,
        "params": manifest,
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    payload = struct.pack("<I", len(blob)) + blob + b"".join(buffers)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, crc))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 20:
        raise ChecksumError(f"{path}: file too short to be a checkpoint")
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    version, crc = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: written by format version {version}, "
            f"reader supports version {CHECKPOINT_VERSION}"
        )
    (payload_len,) = struct.unpack("<Q", raw[12:20])
    payload = raw[20 : 20 + payload_len]
    if len(payload) != payload_len or (zlib.crc32(payload) & 0xFFFFFFFF) != crc:
        raise ChecksumError(f"{path}: checksum mismatch, file is truncated or corrupt")

    (header_len,) = struct.unpack("<I", payload[:4])
    header = json.loads(payload[4 : 4 + header_len].decode("utf-8"))
    offset = 4 + header_len
    tensors = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(payload):
            raise ChecksumError(f"{path}: parameter payload truncated at {entry['name']}")
        arr = np.frombuffer(payload[offset:end], dtype="<f4").reshape(shape).copy()
        tensors[entry["name"]] = Tensor(arr, requires_grad=True)
        offset = end

    schema = LabelSchema(
        labels=tuple(header["schema"]["labels"]),
        language_tag=header["schema"]["language_tag"],
    )
    return Checkpoint(
        config=ModelConfig(**header["model_config"]),
        params=ModelParams(tensors),
        schema=schema,
        history=header.get("history", []),
        component_hashes=header.get("component_hashes", {}),
        rng_state=header.get("rng_state"),
    )
