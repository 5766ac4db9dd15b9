"""Writer for the EMB1 embedding archive format.

Layout (little-endian): magic "EMB1", u32 dimension, u32 record count,
then per record u32 label length, label UTF-8, u32 key length, key UTF-8,
dimension float32 values. Vectors are written as-is; whoever loads the
archive decides about normalization.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"


class ArchiveWriteError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    label: str
    key: str
    vector: np.ndarray


def write_archive(dimension: int, records: list[Record], path: str | Path) -> None:
    if dimension <= 0:
        raise ArchiveWriteError(f"dimension must be positive, got {dimension}")
    chunks = [MAGIC, struct.pack("<II", dimension, len(records))]
    for rec in records:
        vec = np.asarray(rec.vector, dtype="<f4")
        if vec.shape != (dimension,):
            raise ArchiveWriteError(
                f"record {rec.key!r}: vector shape {vec.shape} does not match dimension {dimension}"
            )
        if not np.all(np.isfinite(vec)):
            raise ArchiveWriteError(f"record {rec.key!r}: non-finite values")
        label_bytes = rec.label.encode("utf-8")
        key_bytes = rec.key.encode("utf-8")
        chunks.append(struct.pack("<I", len(label_bytes)))
        chunks.append(label_bytes)
        chunks.append(struct.pack("<I", len(key_bytes)))
        chunks.append(key_bytes)
        chunks.append(vec.tobytes())

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)
