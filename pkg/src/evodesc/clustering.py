"""Grouping classes into clusters of visually similar classes.

Each class is reduced to a single representative vector (either its bare
photo-template embedding or the normalized mean of its descriptor prompt
embeddings) and the representatives are clustered with seeded k-means.
The whole path is deterministic for a fixed seed: ties in assignment and
repair always resolve to the lowest index, and no step depends on thread
scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .types import ClassLabel, DataError, DescriptorSet
from .scoring import render_bare, render_prompt

_MAX_ROUNDS = 100


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of class labels into k non-empty clusters."""

    clusters: list[list[ClassLabel]]

    @property
    def k(self) -> int:
        return len(self.clusters)

    def cluster_of(self, label: ClassLabel) -> int:
        for j, members in enumerate(self.clusters):
            if label in members:
                return j
        raise KeyError(label)

    def to_json_obj(self) -> list[list[str]]:
        return [list(members) for members in self.clusters]

    @staticmethod
    def from_json_obj(obj: list[list[str]]) -> "ClusterAssignment":
        return ClusterAssignment(clusters=[list(members) for members in obj])


def default_k(n_classes: int, target_size: int) -> int:
    """Half-up rounding of n_classes / target_size, at least 1."""
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    if target_size < 1:
        raise ValueError("target_size must be >= 1")
    return max(1, (2 * n_classes + target_size) // (2 * target_size))


def class_representatives(
    source: Sequence[ClassLabel] | DescriptorSet,
    text_embeddings: Mapping[str, np.ndarray],
    photo_prefix: bool = False,
) -> dict[ClassLabel, np.ndarray]:
    """One unit vector per class.

    Given a list of class names, the representative is the embedding of
    the bare photo template. Given a descriptor set, it is the normalized
    mean of the class's descriptor prompt embeddings.
    """
    reps: dict[str, np.ndarray] = {}
    if isinstance(source, DescriptorSet):
        for c in sorted(source.entries):
            vecs = []
            for d in source.entries[c]:
                prompt = render_prompt(c, d, photo_prefix)
                try:
                    vecs.append(np.asarray(text_embeddings[prompt], dtype=np.float64))
                except KeyError:
                    raise DataError(
                        f"missing text embedding for prompt {prompt!r}"
                    ) from None
            if not vecs:
                raise DataError(f"class {c!r} has no descriptors")
            mean = np.mean(np.stack(vecs), axis=0)
            norm = float(np.linalg.norm(mean))
            if norm == 0.0:
                raise DataError(f"descriptor mean for class {c!r} has zero norm")
            reps[c] = mean / norm
    else:
        for c in source:
            prompt = render_bare(c)
            try:
                reps[c] = np.asarray(text_embeddings[prompt], dtype=np.float64)
            except KeyError:
                raise DataError(f"missing text embedding for prompt {prompt!r}") from None
    return reps


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    while len(chosen) < k:
        centroids = points[chosen]
        diff = points[:, None, :] - centroids[None, :, :]
        dist_sq = np.min(np.einsum("ijk,ijk->ij", diff, diff), axis=1)
        total = float(dist_sq.sum())
        if total == 0.0:
            # all remaining points coincide with a centroid; take the
            # lowest-index point not already chosen
            for i in range(n):
                if i not in chosen:
                    chosen.append(i)
                    break
            continue
        chosen.append(int(rng.choice(n, p=dist_sq / total)))
    return points[chosen].copy()


def kmeans(
    points: Mapping[ClassLabel, np.ndarray],
    k: int,
    seed: int,
    objective_trace: list[float] | None = None,
) -> ClusterAssignment:
    """Seeded k-means over labeled points.

    Labels are sorted ascending to fix the row order, centroids start via
    k-means++ with the given seed, and Lloyd iterations run until stable
    or 100 rounds. Empty clusters are repaired in ascending cluster index
    by stealing the point farthest from the centroid of the largest
    cluster (all ties to the lowest index). Appends the post-assignment
    objective of each round to `objective_trace` when given.
    """
    labels = sorted(points)
    n = len(labels)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    matrix = np.stack([np.asarray(points[c], dtype=np.float64) for c in labels])
    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(matrix, k, rng)

    assignment = np.full(n, -1, dtype=np.int64)
    for _ in range(_MAX_ROUNDS):
        diff = matrix[:, None, :] - centroids[None, :, :]
        dist_sq = np.einsum("ijk,ijk->ij", diff, diff)
        new_assignment = np.argmin(dist_sq, axis=1)

        # repair empty clusters before measuring the objective
        counts = np.bincount(new_assignment, minlength=k)
        for empty in range(k):
            if counts[empty] > 0:
                continue
            donor = int(np.argmax(counts))
            members = np.flatnonzero(new_assignment == donor)
            member_dist = np.einsum(
                "ij,ij->i", matrix[members] - centroids[donor], matrix[members] - centroids[donor]
            )
            stolen = int(members[int(np.argmax(member_dist))])
            new_assignment[stolen] = empty
            centroids[empty] = matrix[stolen]
            counts = np.bincount(new_assignment, minlength=k)

        if objective_trace is not None:
            diff = matrix[:, None, :] - centroids[None, :, :]
            dist_sq = np.einsum("ijk,ijk->ij", diff, diff)
            objective_trace.append(
                float(dist_sq[np.arange(n), new_assignment].sum())
            )

        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(k):
            centroids[j] = matrix[assignment == j].mean(axis=0)

    clusters: list[list[str]] = [[] for _ in range(k)]
    for i, c in enumerate(labels):
        clusters[int(assignment[i])].append(c)
    return ClusterAssignment(clusters=clusters)
