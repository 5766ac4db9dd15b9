"""Export manifest: which folders hold which classes, and how to embed them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class ManifestError(ValueError):
    pass


_REQUIRED = {"root", "classes", "model"}
_OPTIONAL = {"batch_size", "device"}


@dataclass(frozen=True)
class ExportManifest:
    root: Path
    classes: dict[str, str]  # class subfolder name -> class label
    model: str
    batch_size: int = 16
    device: str = "cpu"
    path: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.classes:
            raise ManifestError("classes map must not be empty")
        if self.batch_size < 1:
            raise ManifestError(f"batch_size must be >= 1, got {self.batch_size}")
        for folder, label in self.classes.items():
            if not folder or not label:
                raise ManifestError(f"empty folder name or label in classes map: {folder!r} -> {label!r}")

    @classmethod
    def load(cls, path: str | Path) -> "ExportManifest":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ManifestError(f"manifest not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {path}: {exc}") from None
        if not isinstance(obj, dict):
            raise ManifestError("manifest must be a JSON object")
        missing = _REQUIRED - obj.keys()
        if missing:
            raise ManifestError(f"manifest missing keys: {sorted(missing)}")
        unknown = obj.keys() - _REQUIRED - _OPTIONAL
        if unknown:
            raise ManifestError(f"manifest has unknown keys: {sorted(unknown)}")
        classes = obj["classes"]
        if not isinstance(classes, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in classes.items()
        ):
            raise ManifestError("classes must map folder names to class labels")
        # relative root resolves against the manifest's own directory
        root = Path(obj["root"])
        if not root.is_absolute():
            root = path.parent / root
        return cls(
            root=root,
            classes=dict(classes),
            model=str(obj["model"]),
            batch_size=int(obj.get("batch_size", 16)),
            device=str(obj.get("device", "cpu")),
            path=path,
        )

    def validate_folders(self) -> None:
        """Check the dataset tree: root exists, every class folder has files."""
        if not self.root.is_dir():
            raise ManifestError(f"dataset root is not a directory: {self.root}")
        for folder in self.classes:
            d = self.root / folder
            if not d.is_dir():
                raise ManifestError(f"class folder missing: {d}")
            if not any(p.is_file() for p in d.iterdir()):
                raise ManifestError(f"class folder is empty: {d}")
