"""Binary checkpoint format.

Layout (little-endian)::

    b"HLT1"
    u32 n_params,   then n_params records
    u32 n_accums,   then n_accums records

    record := u32 name_len, name (utf-8), u32 rank, rank x u32 dims, float32 data
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..errors import CheckpointError

MAGIC = b"HLT1"
_U32 = struct.Struct("<I")


def _write_records(fh, arrays: Mapping[str, np.ndarray]) -> None:
    fh.write(_U32.pack(len(arrays)))
    for name, arr in arrays.items():
        encoded = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        fh.write(_U32.pack(len(encoded)))
        fh.write(encoded)
        fh.write(_U32.pack(arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


class _Reader:
    def __init__(self, raw: bytes, path: Path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos}")
        chunk = self.raw[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def records(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for _ in range(self.u32()):
            name = self.take(self.u32()).decode("utf-8")
            rank = self.u32()
            dims = struct.unpack(f"<{rank}I", self.take(4 * rank))
            count = int(np.prod(dims, dtype=np.int64))
            data = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(dims)
            if name in out:
                raise CheckpointError(f"{self.path}: duplicate record {name!r}")
            out[name] = data.astype(np.float32)
        return out


def save_checkpoint(
    path: Path,
    params: Mapping[str, np.ndarray],
    accumulators: Optional[Mapping[str, np.ndarray]] = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        _write_records(fh, params)
        _write_records(fh, accumulators or {})


def load_checkpoint(path: Path) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """Return ``(params, accumulators)``."""
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    magic = reader.take(4)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    params = reader.records()
    accumulators = reader.records()
    if reader.pos != len(reader.raw):
        raise CheckpointError(f"{path}: {len(reader.raw) - reader.pos} trailing bytes")
    return params, accumulators
