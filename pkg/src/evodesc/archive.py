"""Reader/writer for the `EMB1` labeled-embedding archive format.

Layout, all little-endian:

    magic   4 bytes  ASCII "EMB1"
    u32     embedding dimension
    u32     record count
    record  u32 label byte-length, label UTF-8 bytes,
            u32 key byte-length,   key UTF-8 bytes,
            `dimension` float32 components

Vectors are normalized at load time, not at write time, so exporters may
write raw model outputs. A stored vector already within 1e-5 of unit norm
is kept bit-exact, which makes read/write round-trips byte-identical for
normalized archives.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import DataError, LabeledEmbedding

MAGIC = b"EMB1"

NORM_TOLERANCE = 1e-5


class ArchiveFormatError(DataError):
    """File does not start with the EMB1 magic."""


class ArchiveCorruptionError(DataError):
    """File length disagrees with the header-implied record layout."""


@dataclass(frozen=True)
class EmbeddingArchive:
    """All records of one archive; every vector shares `dimension` and is
    unit-norm after loading."""

    dimension: int
    records: list[LabeledEmbedding]

    def labels(self) -> list[str]:
        """Distinct labels in first-appearance order."""
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.label, None)
        return list(seen)

    def by_key(self) -> dict[str, np.ndarray]:
        return {rec.key: rec.vector for rec in self.records}


def _normalized(raw: np.ndarray, key: str) -> np.ndarray:
    vec = raw.astype(np.float32, copy=True)
    norm = float(np.linalg.norm(vec.astype(np.float64)))
    if norm == 0.0:
        raise DataError(f"zero-norm vector for record {key!r}")
    if abs(norm - 1.0) > NORM_TOLERANCE:
        vec = (vec.astype(np.float64) / norm).astype(np.float32)
    vec.setflags(write=False)
    return vec


def read_archive(path: str | Path) -> EmbeddingArchive:
    """Load and normalize an EMB1 archive.

    Raises ArchiveFormatError on bad magic, ArchiveCorruptionError when the
    byte length does not match the records the header promises, and
    DataError (naming the record key) on a zero-norm vector.
    """
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise ArchiveFormatError(f"{path}: not an EMB1 archive (bad magic)")
    if len(data) < 12:
        raise ArchiveCorruptionError(f"{path}: truncated header")
    dimension, count = struct.unpack_from("<II", data, 4)
    if dimension < 1:
        raise ArchiveCorruptionError(f"{path}: dimension must be positive")

    offset = 12
    vec_bytes = 4 * dimension
    records: list[LabeledEmbedding] = []
    for index in range(count):
        try:
            (label_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            if offset + label_len > len(data):
                raise struct.error("label overruns file")
            label = data[offset : offset + label_len].decode("utf-8")
            offset += label_len
            (key_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            if offset + key_len > len(data):
                raise struct.error("key overruns file")
            key = data[offset : offset + key_len].decode("utf-8")
            offset += key_len
            if offset + vec_bytes > len(data):
                raise struct.error("vector overruns file")
            raw = np.frombuffer(data, dtype="<f4", count=dimension, offset=offset)
            offset += vec_bytes
        except (struct.error, UnicodeDecodeError) as exc:
            raise ArchiveCorruptionError(
                f"{path}: truncated or garbled record {index}: {exc}"
            ) from exc
        records.append(LabeledEmbedding(label=label, key=key, vector=_normalized(raw, key)))

    if offset != len(data):
        raise ArchiveCorruptionError(
            f"{path}: {len(data) - offset} trailing bytes beyond record {count - 1}"
        )
    return EmbeddingArchive(dimension=dimension, records=records)


def write_archive(archive: EmbeddingArchive, path: str | Path) -> None:
    """Write an archive; vectors are stored as float32 exactly as held."""
    chunks = [MAGIC, struct.pack("<II", archive.dimension, len(archive.records))]
    for rec in archive.records:
        vec = np.asarray(rec.vector)
        if vec.shape != (archive.dimension,):
            raise DataError(
                f"record {rec.key!r} has dimension {vec.shape}, archive says {archive.dimension}"
            )
        label_bytes = rec.label.encode("utf-8")
        key_bytes = rec.key.encode("utf-8")
        chunks.append(struct.pack("<I", len(label_bytes)))
        chunks.append(label_bytes)
        chunks.append(struct.pack("<I", len(key_bytes)))
        chunks.append(key_bytes)
        chunks.append(vec.astype("<f4", copy=False).tobytes())
    Path(path).write_bytes(b"".join(chunks))
