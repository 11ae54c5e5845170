"""Bit-exact checkpoint files.

Layout: an 8-byte magic, a little-endian uint32 manifest length, the
UTF-8 JSON manifest, the raw SHA-256 of the manifest bytes, then the
payload: every parameter array concatenated as little-endian float32 in
row-major order, in manifest order. The manifest records parameter
names/shapes, a payload SHA-256, and caller metadata, so loads verify
integrity before any value is trusted. Writes are atomic (temp file +
rename) and identical states produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"CMTCKPT1"
FORMAT_VERSION = 1
_LEN_STRUCT = struct.Struct("<I")
_HASH_BYTES = hashlib.sha256().digest_size


def save_checkpoint(
    params: list[tuple[str, np.ndarray]],
    metadata: dict,
    path: str | Path,
) -> None:
    """Write parameters plus metadata; overwrites atomically."""
    path = Path(path)
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in params
    )
    manifest = {
        "format": FORMAT_VERSION,
        "params": [{"name": name, "shape": list(arr.shape)} for name, arr in params],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "metadata": metadata,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join([
        MAGIC,
        _LEN_STRUCT.pack(len(manifest_bytes)),
        manifest_bytes,
        hashlib.sha256(manifest_bytes).digest(),
        payload,
    ])
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp_name, path)
    except OSError as exc:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise CheckpointError(f"failed to write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | Path) -> tuple[list[tuple[str, np.ndarray]], dict]:
    """Read and verify a checkpoint; returns (named arrays, metadata)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"failed to read checkpoint {path}: {exc}") from exc
    if len(blob) < len(MAGIC) + _LEN_STRUCT.size or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    (manifest_len,) = _LEN_STRUCT.unpack_from(blob, offset)
    offset += _LEN_STRUCT.size
    manifest_bytes = blob[offset : offset + manifest_len]
    offset += manifest_len
    stored_hash = blob[offset : offset + _HASH_BYTES]
    offset += _HASH_BYTES
    if len(manifest_bytes) != manifest_len or len(stored_hash) != _HASH_BYTES:
        raise CheckpointError(f"{path}: truncated manifest")
    if hashlib.sha256(manifest_bytes).digest() != stored_hash:
        raise CheckpointError(f"{path}: manifest hash mismatch")
    manifest = json.loads(manifest_bytes.decode("utf-8"))
    if manifest.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format {manifest.get('format')!r}")

    payload = blob[offset:]
    sizes = [int(np.prod(p["shape"])) if p["shape"] else 1 for p in manifest["params"]]
    expected = 4 * sum(sizes)
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, manifest implies {expected}"
        )
    if hashlib.sha256(payload).hexdigest() != manifest["payload_sha256"]:
        raise CheckpointError(f"{path}: payload hash mismatch")

    params: list[tuple[str, np.ndarray]] = []
    cursor = 0
    for entry, size in zip(manifest["params"], sizes):
        arr = np.frombuffer(payload, dtype="<f4", count=size, offset=cursor * 4)
        params.append((entry["name"], arr.reshape(entry["shape"]).astype(np.float32)))
        cursor += size
    return params, manifest["metadata"]
