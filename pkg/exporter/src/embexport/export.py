"""CLIP image/text embedding export into EMB1 archives."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from transformers import CLIPModel, CLIPProcessor

from .archive import Record, write_archive
from .manifest import ExportManifest, ManifestError

log = logging.getLogger("embexport")


class PromptFileError(ValueError):
    pass


def _features(out) -> torch.Tensor:
    # transformers < 5 returns the tensor, >= 5 the full model output
    return out if isinstance(out, torch.Tensor) else out.pooler_output


class ClipEncoder:
    """Batched, deterministic CLIP inference. Vectors come out raw
    (unnormalized) float32; normalization is the consumer's job."""

    def __init__(self, model_id: str, device: str = "cpu", batch_size: int = 16):
        self.model = CLIPModel.from_pretrained(model_id).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self.device = device
        self.batch_size = batch_size

    @property
    def dimension(self) -> int:
        return int(self.model.config.projection_dim)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        parts = []
        with torch.no_grad():
            for i in range(0, len(images), self.batch_size):
                batch = self.processor(
                    images=images[i : i + self.batch_size], return_tensors="pt"
                )
                feats = _features(
                    self.model.get_image_features(
                        pixel_values=batch["pixel_values"].to(self.device)
                    )
                )
                parts.append(feats.cpu().to(torch.float32).numpy())
        if not parts:
            return np.zeros((0, self.dimension), dtype=np.float32)
        return np.concatenate(parts, axis=0)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        parts = []
        with torch.no_grad():
            for i in range(0, len(texts), self.batch_size):
                tok = self.processor.tokenizer(
                    texts[i : i + self.batch_size],
                    padding=True,
                    truncation=True,
                    return_tensors="pt",
                )
                feats = _features(
                    self.model.get_text_features(
                        input_ids=tok["input_ids"].to(self.device),
                        attention_mask=tok["attention_mask"].to(self.device),
                    )
                )
                parts.append(feats.cpu().to(torch.float32).numpy())
        if not parts:
            return np.zeros((0, self.dimension), dtype=np.float32)
        return np.concatenate(parts, axis=0)


def _image_entries(manifest: ExportManifest) -> list[tuple[str, str, Path]]:
    """(label, relative key, absolute path) for every file, deterministic order."""
    entries = []
    for folder in sorted(manifest.classes):
        label = manifest.classes[folder]
        d = manifest.root / folder
        for p in sorted(d.iterdir()):
            if p.is_file():
                entries.append((label, (Path(folder) / p.name).as_posix(), p))
    entries.sort(key=lambda e: (e[0], e[1]))
    return entries


def export_images(
    manifest: ExportManifest, out_path: str | Path, encoder: ClipEncoder | None = None
) -> int:
    """Embed every readable image under the manifest's class folders.

    Returns the number of records written. Unreadable files are skipped
    with a warning; the total skip count is reported at the end.
    """
    manifest.validate_folders()
    if encoder is None:
        encoder = ClipEncoder(manifest.model, manifest.device, manifest.batch_size)

    labels: list[str] = []
    keys: list[str] = []
    images: list[Image.Image] = []
    skipped = 0
    for label, key, path in _image_entries(manifest):
        try:
            with Image.open(path) as img:
                images.append(img.convert("RGB"))
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
            skipped += 1
            continue
        labels.append(label)
        keys.append(key)

    if not images:
        raise ManifestError(f"no readable images under {manifest.root}")
    vectors = encoder.encode_images(images)
    records = [
        Record(label=lab, key=key, vector=vec)
        for lab, key, vec in zip(labels, keys, vectors)
    ]
    write_archive(encoder.dimension, records, out_path)
    if skipped:
        log.warning("skipped %d unreadable file(s)", skipped)
    return len(records)


def parse_prompt_file(path: str | Path) -> list[tuple[str, str]]:
    """Read "class<TAB>prompt" lines. Duplicates are dropped with a warning;
    anything else malformed is an error naming the line."""
    path = Path(path)
    if not path.is_file():
        raise PromptFileError(f"prompt file not found: {path}")
    pairs: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    duplicates = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise PromptFileError(
                    f"{path}:{lineno}: expected 'class<TAB>prompt', got {line!r}"
                )
            label, prompt = line.split("\t", 1)
            if not label or not prompt:
                raise PromptFileError(
                    f"{path}:{lineno}: empty class or prompt in {line!r}"
                )
            pair = (label, prompt)
            if pair in seen:
                duplicates += 1
                continue
            seen.add(pair)
            pairs.append(pair)
    if duplicates:
        log.warning("dropped %d duplicate prompt line(s)", duplicates)
    if not pairs:
        raise PromptFileError(f"{path}: no prompts")
    return pairs


def export_texts(
    prompts_path: str | Path, encoder: ClipEncoder, out_path: str | Path
) -> int:
    """Embed every prompt line; key is the prompt string, byte for byte."""
    pairs = parse_prompt_file(prompts_path)
    vectors = encoder.encode_texts([prompt for _, prompt in pairs])
    records = [
        Record(label=lab, key=prompt, vector=vec)
        for (lab, prompt), vec in zip(pairs, vectors)
    ]
    write_archive(encoder.dimension, records, out_path)
    return len(records)
