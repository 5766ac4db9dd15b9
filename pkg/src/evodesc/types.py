"""Domain types shared across the engine: descriptor sets, embeddings,
feedback, memory records, and run configuration.

All types are plain values; functions that "modify" them return new
instances, so instances can be shared freely across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

# Class labels and descriptors are plain strings; validity is checked by the
# helpers below instead of wrapper classes.
ClassLabel = str
Descriptor = str

# Sentinel descriptor: a class whose descriptor list is exactly this
# placeholder is scored with the plain "A photo of a {name}" template.
BARE_DESCRIPTOR = "__bare__"


class EvodescError(Exception):
    """Base class for all engine errors."""


class ConfigError(EvodescError):
    """Invalid or inconsistent configuration (CLI exit code 1)."""


class ProviderError(EvodescError):
    """LLM provider failure (CLI exit code 2)."""


class ResponseParseError(ProviderError):
    """LLM response could not be parsed into a descriptor set."""


class DataError(EvodescError):
    """Bad input data: archives, embeddings, class mismatches (exit code 3)."""


def is_valid_class_label(name: str) -> bool:
    return isinstance(name, str) and name.strip() != ""


def is_valid_descriptor(text: str) -> bool:
    return (
        isinstance(text, str)
        and text.strip() != ""
        and "\n" not in text
        and "\r" not in text
    )


@dataclass
class DescriptorSet:
    """Map from class label to its ordered descriptor list.

    Descriptor order is preserved everywhere (it is visible to the LLM),
    and texts are compared byte-wise: no Unicode normalization, no case
    folding.
    """

    entries: dict[ClassLabel, list[Descriptor]]

    def classes(self) -> list[ClassLabel]:
        return list(self.entries.keys())

    def restrict(self, classes: Iterable[ClassLabel]) -> "DescriptorSet":
        """New set containing only the given classes (order of `classes`)."""
        return DescriptorSet({c: list(self.entries[c]) for c in classes})

    def splice(self, other: "DescriptorSet") -> "DescriptorSet":
        """New set where classes present in `other` take its descriptors."""
        merged = {c: list(ds) for c, ds in self.entries.items()}
        for c, ds in other.entries.items():
            merged[c] = list(ds)
        return DescriptorSet(merged)

    def copy(self) -> "DescriptorSet":
        return DescriptorSet({c: list(ds) for c, ds in self.entries.items()})

    def to_json_obj(self) -> dict[ClassLabel, list[Descriptor]]:
        return {c: list(self.entries[c]) for c in sorted(self.entries)}

    def to_json(self) -> str:
        """Canonical JSON: object of class name -> array of strings.

        Class keys are sorted so serialization is byte-deterministic;
        descriptor order within a class is preserved as significant.
        """
        return json.dumps(self.to_json_obj(), ensure_ascii=False, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DescriptorSet":
        return cls.from_json_obj(json.loads(text))

    @classmethod
    def from_json_obj(cls, raw: Any) -> "DescriptorSet":
        if not isinstance(raw, dict):
            raise DataError("descriptor set JSON must be an object of class -> array")
        entries: dict[str, list[str]] = {}
        for name, descs in raw.items():
            if not isinstance(descs, list) or not all(isinstance(d, str) for d in descs):
                raise DataError(f"descriptor list for {name!r} must be an array of strings")
            entries[name] = list(descs)
        return cls(entries)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DescriptorSet":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def bare_descriptor_set(classes: Iterable[ClassLabel]) -> DescriptorSet:
    """Descriptor set that scores every class with the plain photo template."""
    return DescriptorSet({c: [BARE_DESCRIPTOR] for c in classes})


def validate_descriptor_set(
    ds: DescriptorSet, classes: Sequence[ClassLabel]
) -> list[str]:
    """Check a descriptor set against a class list.

    Returns a list of violation messages; an empty list means the set is
    valid. Never raises: callers decide whether violations are fatal.
    Deterministic and independent of the order of `classes`.
    """
    violations: list[str] = []
    for c in sorted(set(classes)):
        if c not in ds.entries:
            violations.append(f"missing class {c!r}")
            continue
        descs = ds.entries[c]
        if len(descs) == 0:
            violations.append(f"empty descriptor list for {c!r}")
        seen: set[str] = set()
        for d in descs:
            if not is_valid_descriptor(d):
                violations.append(f"invalid descriptor {d!r} in {c!r}")
            if d in seen:
                violations.append(f"duplicate descriptor {d!r} in {c!r}")
            seen.add(d)
    return violations


@dataclass(frozen=True)
class LabeledEmbedding:
    """One unit vector with its ground-truth class (images) or owning class
    (text prompts) and a stable key (image id or rendered prompt)."""

    label: ClassLabel
    key: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        if not is_valid_class_label(self.label):
            raise DataError(f"invalid class label {self.label!r} for key {self.key!r}")


@dataclass(frozen=True)
class VisualFeedback:
    """Classification feedback for one descriptor set: overall accuracy,
    per-class accuracy, and the top-m rows of the improved confusion matrix.

    Each confusion row is sorted by count descending, ties broken by class
    name ascending; zero counts are never stored.
    """

    overall_accuracy: float
    per_class_accuracy: dict[ClassLabel, float]
    confusion_rows: dict[ClassLabel, list[tuple[ClassLabel, int]]]

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "overall_accuracy": self.overall_accuracy,
            "per_class_accuracy": {
                c: self.per_class_accuracy[c] for c in sorted(self.per_class_accuracy)
            },
            "confusion_rows": {
                c: [[other, count] for other, count in self.confusion_rows[c]]
                for c in sorted(self.confusion_rows)
            },
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "VisualFeedback":
        return cls(
            overall_accuracy=float(obj["overall_accuracy"]),
            per_class_accuracy={c: float(a) for c, a in obj["per_class_accuracy"].items()},
            confusion_rows={
                c: [(other, int(count)) for other, count in rows]
                for c, rows in obj["confusion_rows"].items()
            },
        )


POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class MemoryRecord:
    """One remembered descriptor with the iteration it was judged at and
    whether it helped (positive) or hurt (negative)."""

    class_name: ClassLabel
    descriptor: Descriptor
    iteration: int
    polarity: str

    def __post_init__(self) -> None:
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ValueError(f"polarity must be positive|negative, got {self.polarity!r}")
        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "class": self.class_name,
            "descriptor": self.descriptor,
            "iteration": self.iteration,
            "polarity": self.polarity,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "MemoryRecord":
        return cls(
            class_name=obj["class"],
            descriptor=obj["descriptor"],
            iteration=int(obj["iteration"]),
            polarity=obj["polarity"],
        )


@dataclass
class RunConfig:
    """Hyperparameters of one optimization run.

    Defaults follow the reference configuration: 10 iterations, 30
    descriptors at initialization, 15 replaced per mutation, 4 mutation
    candidates, confusion threshold 0.9 with top-3 rows, clusters of
    roughly 10 classes, sampling temperature 1.0.
    """

    n_iterations: int = 10
    n_init: int = 30
    n_change: int = 15
    n_mutants: int = 4
    lam: float = 0.9
    top_m: int = 3
    cluster_target_size: int = 10
    temperature: float = 1.0
    rng_seed: int = 0
    max_tokens: int = 4096
    # When true, descriptor prompts read "A photo of a {name}, which {text}"
    # instead of the plain "{name}, which {text}".
    photo_prefix: bool = False
    # When true, every candidate is scored on the full image set and class
    # list instead of its own cluster's slice.
    global_selection: bool = False
    # Worker threads for candidate dispatch/evaluation inside one cluster.
    workers: int = 1

    # JSON key for `lam`; "lambda" is a Python keyword.
    _JSON_ALIASES = {"lambda": "lam"}

    def __post_init__(self) -> None:
        if self.n_iterations < 0:
            raise ConfigError("n_iterations must be >= 0")
        for name in ("n_init", "n_change", "n_mutants", "top_m", "cluster_target_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.n_change > self.n_init:
            raise ConfigError("n_change must not exceed n_init")
        if not (0.0 < self.lam <= 1.0):
            raise ConfigError("lambda must lie in (0, 1]")
        if self.temperature < 0:
            raise ConfigError("temperature must be non-negative")
        if not (0 <= self.rng_seed < 2**64):
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def to_json_obj(self) -> dict[str, Any]:
        obj: dict[str, Any] = {}
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            obj[key] = getattr(self, f.name)
        return obj

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in obj.items():
            name = cls._JSON_ALIASES.get(key, key)
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = value
        return cls(**kwargs)
