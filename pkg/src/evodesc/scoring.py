"""Descriptor-ensemble classification and the feedback metrics built on it.

A class is scored against an image as the mean cosine similarity between
the image vector and the embeddings of the class's rendered descriptor
prompts; the predicted class is the argmax. Feedback bundles overall and
per-class accuracy with the top rows of an "improved" confusion matrix:
for an image with ground truth g, every other class whose score exceeds
lambda times the score of g counts as confused with g.

All scores accumulate in float64 with a fixed summation order, so results
are bit-identical across runs regardless of how callers schedule work.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .types import (
    BARE_DESCRIPTOR,
    ClassLabel,
    DataError,
    Descriptor,
    DescriptorSet,
    LabeledEmbedding,
    VisualFeedback,
)


def render_bare(class_name: ClassLabel) -> str:
    return f"A photo of a {class_name}"


def render_prompt(
    class_name: ClassLabel, descriptor: Descriptor, photo_prefix: bool = False
) -> str:
    """Rendered text that gets embedded for one (class, descriptor) pair.

    The placeholder descriptor maps to the plain photo template; otherwise
    the "{name}, which {text}" form is used, optionally with the photo
    prefix in front.
    """
    if descriptor == BARE_DESCRIPTOR:
        return render_bare(class_name)
    if photo_prefix:
        return f"A photo of a {class_name}, which {descriptor}"
    return f"{class_name}, which {descriptor}"


def rendered_prompts(
    ds: DescriptorSet, photo_prefix: bool = False
) -> list[tuple[ClassLabel, str]]:
    """(class, prompt) pairs for every descriptor, deduplicated by prompt."""
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    for c in sorted(ds.entries):
        for d in ds.entries[c]:
            prompt = render_prompt(c, d, photo_prefix)
            if prompt not in seen:
                seen.add(prompt)
                pairs.append((c, prompt))
    return pairs


@dataclass(frozen=True)
class ScoreMatrix:
    """Mean cosine score of every image against every class.

    `classes` is sorted ascending; `scores[i, j]` is the score of image i
    for `classes[j]`.
    """

    classes: list[ClassLabel]
    scores: np.ndarray

    def row(self, i: int) -> dict[ClassLabel, float]:
        return {c: float(self.scores[i, j]) for j, c in enumerate(self.classes)}


def _lookup(
    text_embeddings: Mapping[str, np.ndarray], prompt: str, dim: int
) -> np.ndarray:
    try:
        vec = text_embeddings[prompt]
    except KeyError:
        raise DataError(f"missing text embedding for prompt {prompt!r}") from None
    arr = np.asarray(vec, dtype=np.float64)
    if arr.shape != (dim,):
        raise DataError(
            f"text embedding for prompt {prompt!r} has dimension {arr.shape[0]}, "
            f"images have {dim}"
        )
    return arr


def score_matrix(
    images: Sequence[LabeledEmbedding],
    ds: DescriptorSet,
    text_embeddings: Mapping[str, np.ndarray],
    photo_prefix: bool = False,
) -> ScoreMatrix:
    """Score every image against every class of `ds`.

    Image/text vectors are unit-norm, so the dot product is the cosine.
    Per-descriptor cosines are averaged in descriptor-list order.
    """
    if not images:
        raise DataError("at least one image is required")
    classes = sorted(ds.entries)
    img_mat = np.stack([np.asarray(im.vector, dtype=np.float64) for im in images])
    dim = img_mat.shape[1]
    scores = np.empty((len(images), len(classes)), dtype=np.float64)
    for j, c in enumerate(classes):
        descs = ds.entries[c]
        if not descs:
            raise DataError(f"class {c!r} has no descriptors")
        text_mat = np.stack(
            [_lookup(text_embeddings, render_prompt(c, d, photo_prefix), dim) for d in descs]
        )
        # einsum keeps accumulation in plain C loops (no BLAS dispatch)
        per_descriptor = np.einsum("id,kd->ik", img_mat, text_mat)
        scores[:, j] = per_descriptor.sum(axis=1) / len(descs)
    return ScoreMatrix(classes=classes, scores=scores)


def class_scores(
    image: LabeledEmbedding,
    ds: DescriptorSet,
    text_embeddings: Mapping[str, np.ndarray],
    photo_prefix: bool = False,
) -> dict[ClassLabel, float]:
    """Mean cosine score of one image for each class."""
    return score_matrix([image], ds, text_embeddings, photo_prefix).row(0)


def _predictions(matrix: ScoreMatrix) -> list[ClassLabel]:
    # argmax returns the first maximum; classes are sorted ascending, so
    # ties resolve to the lexicographically smallest name
    return [matrix.classes[j] for j in np.argmax(matrix.scores, axis=1)]


def classify(
    image: LabeledEmbedding,
    ds: DescriptorSet,
    text_embeddings: Mapping[str, np.ndarray],
    photo_prefix: bool = False,
) -> ClassLabel:
    """Predicted class: argmax score, ties broken by class name ascending."""
    return _predictions(score_matrix([image], ds, text_embeddings, photo_prefix))[0]


def accuracy(
    images: Sequence[LabeledEmbedding],
    ds: DescriptorSet,
    text_embeddings: Mapping[str, np.ndarray],
    photo_prefix: bool = False,
) -> tuple[float, dict[ClassLabel, float]]:
    """Overall and per-class top-1 accuracy.

    Per-class accuracy covers only classes that actually appear as a
    ground truth in `images`.
    """
    matrix = score_matrix(images, ds, text_embeddings, photo_prefix)
    predictions = _predictions(matrix)
    correct = 0
    per_class_total: dict[str, int] = {}
    per_class_correct: dict[str, int] = {}
    for image, predicted in zip(images, predictions):
        per_class_total[image.label] = per_class_total.get(image.label, 0) + 1
        if predicted == image.label:
            correct += 1
            per_class_correct[image.label] = per_class_correct.get(image.label, 0) + 1
    per_class = {
        c: per_class_correct.get(c, 0) / total for c, total in per_class_total.items()
    }
    return correct / len(images), per_class


def improved_confusion(
    images: Sequence[LabeledEmbedding],
    ds: DescriptorSet,
    text_embeddings: Mapping[str, np.ndarray],
    lam: float,
    m: int,
    photo_prefix: bool = False,
) -> dict[ClassLabel, list[tuple[ClassLabel, int]]]:
    """Top-m rows of the improved confusion matrix.

    For an image with ground truth g, a competitor c' counts as confused
    whenever score(c') > lam * score(g), strictly. Counts accumulate per
    ground-truth class over that class's images only. The ground-truth
    column itself is excluded: it would read score(g) > lam * score(g),
    i.e. it fires for every image with score(g) > 0 and carries no
    information. Rows keep only non-zero counts, sorted by count
    descending then class name ascending, truncated to m.
    """
    if not (0.0 < lam <= 1.0):
        raise ValueError("lam must lie in (0, 1]")
    if m < 1:
        raise ValueError("m must be >= 1")
    matrix = score_matrix(images, ds, text_embeddings, photo_prefix)
    class_index = {c: j for j, c in enumerate(matrix.classes)}
    counts: dict[str, dict[str, int]] = {}
    for i, image in enumerate(images):
        g = image.label
        counts.setdefault(g, {})
        if g not in class_index:
            continue
        threshold = lam * matrix.scores[i, class_index[g]]
        for j, other in enumerate(matrix.classes):
            if other == g:
                continue
            if matrix.scores[i, j] > threshold:
                counts[g][other] = counts[g].get(other, 0) + 1
    rows: dict[str, list[tuple[str, int]]] = {}
    for g, row_counts in counts.items():
        ordered = sorted(row_counts.items(), key=lambda item: (-item[1], item[0]))
        rows[g] = ordered[:m]
    return rows


def evaluate_feedback(
    images: Sequence[LabeledEmbedding],
    ds: DescriptorSet,
    text_embeddings: Mapping[str, np.ndarray],
    lam: float,
    m: int,
    photo_prefix: bool = False,
) -> VisualFeedback:
    """Full feedback for one descriptor set: accuracies plus confusion rows."""
    overall, per_class = accuracy(images, ds, text_embeddings, photo_prefix)
    rows = improved_confusion(images, ds, text_embeddings, lam, m, photo_prefix)
    return VisualFeedback(
        overall_accuracy=overall, per_class_accuracy=per_class, confusion_rows=rows
    )


def fitness(feedback: VisualFeedback) -> float:
    """Fitness used for natural selection: the overall accuracy."""
    return feedback.overall_accuracy


def feedback_to_text(feedback: VisualFeedback) -> str:
    """Deterministic natural-language rendering embedded into LLM prompts.

    One header line with the overall accuracy, then one line per class in
    ascending name order.
    """
    lines = [f"overall accuracy: {feedback.overall_accuracy * 100:.1f}%"]
    class_names = sorted(set(feedback.per_class_accuracy) | set(feedback.confusion_rows))
    for c in class_names:
        acc = feedback.per_class_accuracy.get(c)
        head = f"{c} (acc={acc * 100:.1f}%)" if acc is not None else c
        row = feedback.confusion_rows.get(c, [])
        if row:
            confused = ", ".join(f"{other}({count})" for other, count in row)
            lines.append(f"{head}: confused with {confused}")
        else:
            lines.append(f"{head}: confused with: none")
    return "\n".join(lines)
