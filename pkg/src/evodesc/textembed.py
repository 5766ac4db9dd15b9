"""Sources of text embeddings for rendered descriptor prompts.

The optimizer never talks to an embedding model directly; it asks a
TextEmbedder for unit vectors keyed by exact prompt strings. Three
implementations: a precomputed archive (the usual offline path), a
deterministic hash-based mock for tests, and an external command that is
handed a prompt list and must produce an archive.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .archive import EmbeddingArchive, read_archive
from .mockembed import mock_embed
from .types import ClassLabel, ConfigError, DataError


class TextEmbedder:
    """Maps (class label, prompt) pairs to unit embedding vectors.

    `dimension` is None when unknown until the first call.
    """

    dimension: int | None = None

    def embed(self, pairs: Sequence[tuple[ClassLabel, str]]) -> dict[str, np.ndarray]:
        raise NotImplementedError


class ArchiveTextEmbedder(TextEmbedder):
    """Serves embeddings precomputed into an archive, keyed by prompt."""

    def __init__(self, archive: EmbeddingArchive | str | Path):
        if isinstance(archive, (str, Path)):
            archive = read_archive(archive)
        self._table = archive.by_key()
        self.dimension = archive.dimension

    def embed(self, pairs: Sequence[tuple[ClassLabel, str]]) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for _label, prompt in pairs:
            try:
                out[prompt] = self._table[prompt]
            except KeyError:
                raise DataError(
                    f"text archive has no embedding for prompt {prompt!r}"
                ) from None
        return out


class MockTextEmbedder(TextEmbedder):
    """Deterministic hash-based embeddings; no model involved."""

    def __init__(self, dimension: int):
        if dimension < 2:
            raise ConfigError("mock embedder dimension must be >= 2")
        self.dimension = dimension
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, pairs: Sequence[tuple[ClassLabel, str]]) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for _label, prompt in pairs:
            if prompt not in self._cache:
                self._cache[prompt] = mock_embed(prompt, self.dimension)
            out[prompt] = self._cache[prompt]
        return out


class CommandTextEmbedder(TextEmbedder):
    """Runs an external command to embed prompts on demand.

    The command template must contain {prompts} and {out} placeholders.
    The prompts file holds one "label<TAB>prompt" line per pair, and the
    command must write an embedding archive keyed by the exact prompt
    strings to the output path. Results are cached, so repeated prompts
    cost one subprocess call total.
    """

    def __init__(self, command_template: str):
        if "{prompts}" not in command_template or "{out}" not in command_template:
            raise ConfigError(
                "embedder command must contain {prompts} and {out} placeholders"
            )
        self._argv_template = shlex.split(command_template)
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, pairs: Sequence[tuple[ClassLabel, str]]) -> dict[str, np.ndarray]:
        missing = []
        seen: set[str] = set()
        for label, prompt in pairs:
            if prompt in self._cache or prompt in seen:
                continue
            if "\t" in label:
                raise DataError(f"class label {label!r} contains a tab")
            seen.add(prompt)
            missing.append((label, prompt))
        if missing:
            self._run(missing)
        out: dict[str, np.ndarray] = {}
        for _label, prompt in pairs:
            try:
                out[prompt] = self._cache[prompt]
            except KeyError:
                raise DataError(
                    f"embedder command produced no embedding for prompt {prompt!r}"
                ) from None
        return out

    def _run(self, pairs: list[tuple[str, str]]) -> None:
        with tempfile.TemporaryDirectory(prefix="evodesc-embed-") as tmp:
            prompts_path = Path(tmp) / "prompts.tsv"
            out_path = Path(tmp) / "texts.emb"
            with open(prompts_path, "w", encoding="utf-8") as fh:
                for label, prompt in pairs:
                    fh.write(f"{label}\t{prompt}\n")
            argv = [
                arg.format(prompts=str(prompts_path), out=str(out_path))
                for arg in self._argv_template
            ]
            proc = subprocess.run(argv, capture_output=True, text=True)
            if proc.returncode != 0:
                tail = proc.stderr.strip().splitlines()[-3:]
                raise DataError(
                    f"embedder command failed with exit code {proc.returncode}: "
                    + " | ".join(tail)
                )
            if not out_path.exists():
                raise DataError("embedder command wrote no output archive")
            archive = read_archive(out_path)
            if self.dimension is None:
                self.dimension = archive.dimension
            elif archive.dimension != self.dimension:
                raise DataError(
                    f"embedder command changed dimension from {self.dimension} "
                    f"to {archive.dimension}"
                )
            self._cache.update(archive.by_key())


def make_text_embedder(mode: str) -> TextEmbedder:
    """Build an embedder from a mode string.

    "archive:PATH" reads a precomputed archive, "mock:DIM" uses the hash
    mock at the given dimension, "command:TEMPLATE" shells out.
    """
    kind, sep, rest = mode.partition(":")
    if not sep or not rest:
        raise ConfigError(
            f"invalid text embedder {mode!r}; expected archive:PATH, mock:DIM "
            "or command:TEMPLATE"
        )
    if kind == "archive":
        path = Path(rest)
        if not path.exists():
            raise DataError(f"text archive not found: {path}")
        return ArchiveTextEmbedder(path)
    if kind == "mock":
        try:
            dim = int(rest)
        except ValueError:
            raise ConfigError(f"mock embedder dimension must be an integer: {rest!r}") from None
        return MockTextEmbedder(dim)
    if kind == "command":
        return CommandTextEmbedder(rest)
    raise ConfigError(f"unknown text embedder kind {kind!r}")
