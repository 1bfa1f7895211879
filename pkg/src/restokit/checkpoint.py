"""Versioned checkpoint container.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header
(schema version, run metadata, array index with name/dtype/shape/offset),
raw little-endian float32 payloads, and a trailing CRC32 over everything
before it. Corruption, truncation, version skew, and shape mismatches all
raise distinct errors.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointCorruptError, CheckpointVersionError

MAGIC = b"RESTOKIT"
SCHEMA_VERSION = 1


def write_container(path, meta: dict, arrays: dict[str, torch.Tensor]) -> None:
    """Serialize named float32 arrays plus a JSON metadata block."""
    index = []
    payloads = []
    offset = 0
    for name in sorted(arrays):
        tensor = arrays[name].detach().cpu()
        if tensor.dtype != torch.float32:
            raise CheckpointCorruptError(
                f"array {name!r} has dtype {tensor.dtype}; the container stores float32 only"
            )
        raw = np.ascontiguousarray(tensor.numpy(), dtype="<f4").tobytes()
        index.append({"name": name, "dtype": "f4", "shape": list(tensor.shape), "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    header = dict(meta)
    header["schema_version"] = SCHEMA_VERSION
    header["arrays"] = index
    header["payload_bytes"] = offset
    header_bytes = json.dumps(header, sort_keys=True).encode()

    blob = MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + b"".join(payloads)
    blob += struct.pack("<I", zlib.crc32(blob))
    Path(path).write_bytes(blob)


def read_container(path) -> tuple[dict, dict[str, torch.Tensor]]:
    """Verify integrity and version, then decode arrays back to tensors."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 8 + 4:
        raise CheckpointCorruptError(f"{path}: file too short to be a checkpoint")
    body, crc_stored = blob[:-4], struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(body) != crc_stored:
        raise CheckpointCorruptError(f"{path}: checksum failure (truncated or corrupt)")
    if body[: len(MAGIC)] != MAGIC:
        raise CheckpointCorruptError(f"{path}: bad magic; not a checkpoint container")
    header_len = struct.unpack("<Q", body[len(MAGIC): len(MAGIC) + 8])[0]
    header_start = len(MAGIC) + 8
    header = json.loads(body[header_start: header_start + header_len].decode())
    if header.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointVersionError(
            f"{path}: schema version {header.get('schema_version')} != {SCHEMA_VERSION}"
        )
    payload = body[header_start + header_len:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointCorruptError(f"{path}: payload length does not match the index")
    arrays: dict[str, torch.Tensor] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        raw = payload[start: start + 4 * count]
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        arrays[entry["name"]] = torch.from_numpy(arr)
    meta = {k: v for k, v in header.items() if k not in ("arrays", "payload_bytes")}
    return meta, arrays
