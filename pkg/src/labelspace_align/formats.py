"""Serialization primitives: the LSEB matrix container and canonical JSON.

Every float matrix artifact in the package (label embeddings, similarity
matrices, checkpoint payloads) is stored in one container so round trips
are bit-exact: a 16-byte header -- magic ``LSEB``, version, row count,
column count, all unsigned 32-bit little-endian -- followed by the
float32 payload in row-major order.

JSON artifacts go through :func:`canonical_json` so identical content
always serializes to identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimMismatchError,
    MissingFileError,
    NonFiniteEntryError,
)

MAGIC = b"LSEB"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
HEADER_SIZE = _HEADER.size


def matrix_bytes(m: np.ndarray) -> bytes:
    """Serialize a 2-D float array to LSEB bytes (float32, row-major)."""
    m = np.ascontiguousarray(m, dtype=np.float32)
    if m.ndim != 2:
        raise DimMismatchError(f"expected a 2-D matrix, got shape {m.shape}")
    header = _HEADER.pack(MAGIC, VERSION, m.shape[0], m.shape[1])
    return header + m.tobytes()


def write_matrix(path: Path | str, m: np.ndarray) -> None:
    Path(path).write_bytes(matrix_bytes(m))


def matrix_from_bytes(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    """Parse LSEB bytes into an (n, d) float32 array."""
    if len(raw) < HEADER_SIZE:
        raise BadMagicError(f"{source}: file shorter than the 16-byte header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise BadMagicError(f"{source}: unsupported version {version}")
    payload = raw[HEADER_SIZE:]
    expected = n * d * 4
    if len(payload) != expected:
        raise DimMismatchError(
            f"{source}: header declares {n}x{d} ({expected} payload bytes), "
            f"found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    if not np.all(np.isfinite(data)):
        raise NonFiniteEntryError(f"{source}: payload contains NaN or Inf")
    return np.array(data)  # own, writable copy


def read_matrix(path: Path | str) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    return matrix_from_bytes(path.read_bytes(), source=str(path))


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, fixed separators, no ASCII escaping."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_json(path: Path | str, obj) -> None:
    Path(path).write_text(canonical_json(obj) + "\n", encoding="utf-8")


def read_json(path: Path | str):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def sha256_bytes(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for chunk in chunks:
        h.update(chunk)
    return h.hexdigest()


def sha256_file(path: Path | str) -> str:
    return sha256_bytes(Path(path).read_bytes())
