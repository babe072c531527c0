"""Binary vector files keyed by string ids ("VECF" format).

Layout: magic "VECF" | version (u32 LE) | dimension (u32 LE), then per
record: id byte-length (u32 LE) | UTF-8 id | dimension x float32 LE.
Values are widened to float64 on load.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

MAGIC = b"VECF"
VERSION = 1


class VecFileError(ValueError):
    """Malformed vector file."""


def save_vectors(path, vectors: Mapping[str, np.ndarray], dim: int) -> None:
    """Write id -> vector records; every vector must have length ``dim``."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, dim))
        for key, vec in vectors.items():
            arr = np.ascontiguousarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise VecFileError(
                    f"vector for {key!r} has shape {arr.shape}, expected ({dim},)")
            encoded = key.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(arr.tobytes())


def load_vectors(path) -> tuple[Dict[str, np.ndarray], int]:
    """Return ({id: float64 vector}, dimension)."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise VecFileError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, dim = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise VecFileError(f"{path}: unsupported version {version}")
    offset = 12
    record_bytes = 4 * dim
    vectors: Dict[str, np.ndarray] = {}
    while offset < len(data):
        (key_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        key = data[offset:offset + key_len].decode("utf-8")
        offset += key_len
        if offset + record_bytes > len(data):
            raise VecFileError(f"{path}: truncated record for {key!r}")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += record_bytes
        vectors[key] = vec.astype(np.float64)
    return vectors, dim
