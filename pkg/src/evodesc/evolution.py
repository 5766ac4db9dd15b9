"""The iterative descriptor-optimization loop.

One run: cluster the classes, ask the LLM for initial descriptors per
cluster, then for N iterations re-cluster, mutate each cluster into K
candidates, cross them over into one more, keep the fittest, update the
memory banks from the diff against the previous set, and track the best
descriptor set seen so far. Every completed iteration is checkpointed so
a run can resume after a crash.

Determinism contract: with a fixed seed, a replay provider and fixed
archives, two runs produce byte-identical descriptors, checkpoints and
logs, regardless of the worker-thread count.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clustering import ClusterAssignment, class_representatives, default_k, kmeans
from .llm import (
    ChatProvider,
    ChatRequest,
    build_crossover_prompt,
    build_init_prompt,
    build_mutation_prompt,
    parse_descriptor_response,
    render_memory,
)
from .mockembed import derive_seed
from .scoring import (
    evaluate_feedback,
    feedback_to_text,
    fitness,
    render_bare,
    rendered_prompts,
)
from .textembed import TextEmbedder
from .types import (
    BARE_DESCRIPTOR,
    ClassLabel,
    DataError,
    DescriptorSet,
    LabeledEmbedding,
    MemoryRecord,
    NEGATIVE,
    POSITIVE,
    ProviderError,
    ResponseParseError,
    RunConfig,
    VisualFeedback,
)

_CHECKPOINT_RE = re.compile(r"^checkpoint_(\d{4,})\.json$")


@dataclass(frozen=True)
class RunState:
    """Everything the loop carries between iterations."""

    iteration: int
    current: DescriptorSet
    global_best: DescriptorSet
    global_best_fitness: float
    memory: list[MemoryRecord]
    rng_seed: int
    clusters: ClusterAssignment

    def to_json_obj(self) -> dict:
        return {
            "iteration": self.iteration,
            "current": self.current.to_json_obj(),
            "global_best": self.global_best.to_json_obj(),
            "global_best_fitness": self.global_best_fitness,
            "memory": [r.to_json_obj() for r in self.memory],
            "rng_seed": self.rng_seed,
            "clusters": self.clusters.to_json_obj(),
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "RunState":
        return cls(
            iteration=int(obj["iteration"]),
            current=DescriptorSet.from_json_obj(obj["current"]),
            global_best=DescriptorSet.from_json_obj(obj["global_best"]),
            global_best_fitness=float(obj["global_best_fitness"]),
            memory=[MemoryRecord.from_json_obj(r) for r in obj["memory"]],
            rng_seed=int(obj["rng_seed"]),
            clusters=ClusterAssignment.from_json_obj(obj["clusters"]),
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, ensure_ascii=False, sort_keys=True, indent=2)
            fh.write("\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> "RunState":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


class RunLogger:
    """Collects structured log entries; optionally mirrors them to a
    JSON-lines file. Entries carry no timestamps so logs are reproducible."""

    def __init__(self, path: str | Path | None = None, append: bool = False):
        self.entries: list[dict] = []
        self._fh = None
        if path is not None:
            self._fh = open(path, "a" if append else "w", encoding="utf-8")

    def log(self, entry: dict) -> None:
        self.entries.append(entry)
        if self._fh is not None:
            self._fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "RunLogger":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _embeddings_for(
    embedder: TextEmbedder, ds: DescriptorSet, photo_prefix: bool
) -> dict[str, np.ndarray]:
    return embedder.embed(rendered_prompts(ds, photo_prefix))


def _evaluate(
    images: Sequence[LabeledEmbedding],
    ds: DescriptorSet,
    embedder: TextEmbedder,
    config: RunConfig,
) -> VisualFeedback:
    embs = _embeddings_for(embedder, ds, config.photo_prefix)
    return evaluate_feedback(
        images, ds, embs, config.lam, config.top_m, config.photo_prefix
    )


def _complete_and_parse(
    provider: ChatProvider,
    request: ChatRequest,
    expected_classes: Sequence[ClassLabel],
    expected_count: int,
) -> tuple[DescriptorSet, list[str]]:
    """One request with a single retry on parse failure."""
    try:
        raw = provider.complete(request)
        return parse_descriptor_response(raw, expected_classes, expected_count)
    except ResponseParseError:
        raw = provider.complete(request)
        return parse_descriptor_response(raw, expected_classes, expected_count)


def initialize(
    classes: Sequence[ClassLabel],
    config: RunConfig,
    provider: ChatProvider,
    embedder: TextEmbedder,
    images: Sequence[LabeledEmbedding] | None = None,
) -> tuple[RunState, VisualFeedback | None]:
    """Cluster the classes and ask the LLM for the initial descriptors.

    When `images` is given the initial feedback is computed and becomes
    the starting global-best fitness; returns (state, feedback).
    """
    ordered = sorted(set(classes))
    if not ordered:
        raise DataError("at least one class is required")
    bare = embedder.embed([(c, render_bare(c)) for c in ordered])
    reps = class_representatives(ordered, bare)
    k = default_k(len(ordered), config.cluster_target_size)
    clusters = kmeans(reps, k, derive_seed(config.rng_seed, "kmeans:init"))

    entries: dict[str, list[str]] = {}
    for j, members in enumerate(clusters.clusters):
        request = build_init_prompt(
            members, config.n_init, config.temperature, config.max_tokens
        )
        try:
            ds, _warnings = _complete_and_parse(provider, request, members, config.n_init)
        except (ProviderError, ResponseParseError) as exc:
            raise type(exc)(f"initialization of cluster {j} ({members}): {exc}") from exc
        entries.update(ds.entries)

    d0 = DescriptorSet(entries)
    feedback = None
    best_fitness = float("nan")
    if images is not None:
        feedback = _evaluate(images, d0, embedder, config)
        best_fitness = fitness(feedback)
    state = RunState(
        iteration=0,
        current=d0,
        global_best=d0.copy(),
        global_best_fitness=best_fitness,
        memory=[],
        rng_seed=config.rng_seed,
        clusters=clusters,
    )
    return state, feedback


def mutate_cluster(
    ds_cluster: DescriptorSet,
    feedback_text: str,
    memory_text: str,
    config: RunConfig,
    provider: ChatProvider,
) -> tuple[list[DescriptorSet], list[dict]]:
    """K independent mutation candidates for one cluster.

    Each candidate comes from its own LLM call; a candidate whose
    response cannot be parsed even after one retry falls back to an
    unmodified copy of the cluster's current descriptors. All K falling
    back is an error: the iteration cannot make progress.
    """
    members = ds_cluster.classes()
    request = build_mutation_prompt(
        ds_cluster,
        feedback_text,
        memory_text,
        config.n_change,
        config.temperature,
        config.max_tokens,
    )

    def one_candidate(index: int) -> tuple[DescriptorSet, dict | None]:
        try:
            ds, warnings = _complete_and_parse(provider, request, members, config.n_init)
        except ResponseParseError as exc:
            return ds_cluster.copy(), {
                "event": "mutation_fallback",
                "candidate": index,
                "error": str(exc),
            }
        event = None
        if warnings:
            event = {"event": "parse_warnings", "candidate": index, "warnings": warnings}
        return ds, event

    if config.workers > 1 and provider.parallel_safe:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(one_candidate, range(config.n_mutants)))
    else:
        results = [one_candidate(i) for i in range(config.n_mutants)]

    candidates = [ds for ds, _ in results]
    events = [event for _, event in results if event is not None]
    fallbacks = sum(1 for e in events if e["event"] == "mutation_fallback")
    if fallbacks == config.n_mutants:
        raise ProviderError(
            f"all {config.n_mutants} mutation candidates failed to parse"
        )
    return candidates, events


def crossover_cluster(
    candidates: Sequence[tuple[DescriptorSet, VisualFeedback]],
    config: RunConfig,
    provider: ChatProvider,
) -> tuple[DescriptorSet, list[dict]]:
    """Mix-and-match candidate built by the LLM from the K mutants.

    Parse failure after one retry falls back to the fittest mutant (ties
    to the lowest index), so crossover never aborts an iteration.
    """
    if not candidates:
        raise ValueError("crossover needs at least one candidate")
    members = candidates[0][0].classes()
    request = build_crossover_prompt(candidates, config.temperature, config.max_tokens)
    try:
        ds, warnings = _complete_and_parse(provider, request, members, config.n_init)
    except ResponseParseError as exc:
        best = 0
        for i, (_ds, fb) in enumerate(candidates):
            if fitness(fb) > fitness(candidates[best][1]):
                best = i
        return candidates[best][0].copy(), [
            {"event": "crossover_fallback", "fallback_candidate": best, "error": str(exc)}
        ]
    events = []
    if warnings:
        events.append({"event": "parse_warnings", "candidate": "crossover", "warnings": warnings})
    return ds, events


def evaluate_candidates(
    candidates: Sequence[DescriptorSet],
    cluster_classes: Sequence[ClassLabel],
    current: DescriptorSet,
    images: Sequence[LabeledEmbedding],
    embedder: TextEmbedder,
    config: RunConfig,
) -> list[VisualFeedback]:
    """Feedback for each cluster-scoped candidate.

    A candidate is judged after splicing it into the full current set; by
    default both the images and the classification label space are
    restricted to the cluster, with `global_selection` widening both to
    the whole problem.
    """
    cluster_set = set(cluster_classes)
    feedbacks = []
    for candidate in candidates:
        spliced = current.splice(candidate)
        if config.global_selection:
            eval_ds, eval_images = spliced, images
        else:
            eval_ds = spliced.restrict(sorted(cluster_set))
            eval_images = [im for im in images if im.label in cluster_set]
        feedbacks.append(_evaluate(eval_images, eval_ds, embedder, config))
    return feedbacks


def select_cluster(
    candidates: Sequence[DescriptorSet],
    cluster_classes: Sequence[ClassLabel],
    current: DescriptorSet,
    images: Sequence[LabeledEmbedding],
    embedder: TextEmbedder,
    config: RunConfig,
    feedbacks: Sequence[VisualFeedback] | None = None,
) -> tuple[int, list[VisualFeedback]]:
    """Index of the fittest candidate, ties broken by lowest index.

    Precomputed feedbacks may be passed to avoid re-evaluating.
    """
    if not candidates:
        raise ValueError("selection needs at least one candidate")
    if feedbacks is None:
        feedbacks = evaluate_candidates(
            candidates, cluster_classes, current, images, embedder, config
        )
    winner = 0
    for i, fb in enumerate(feedbacks):
        if fitness(fb) > fitness(feedbacks[winner]):
            winner = i
    return winner, list(feedbacks)


def update_memory(
    memory: Sequence[MemoryRecord],
    d_prev: DescriptorSet,
    d_new: DescriptorSet,
    images: Sequence[LabeledEmbedding],
    embedder: TextEmbedder,
    config: RunConfig,
    iteration: int,
) -> tuple[list[MemoryRecord], dict]:
    """Append records for every added and deleted descriptor.

    The diff is taken per class by exact text. Three accuracies over the
    same images decide the polarities: a_u with only the unchanged
    descriptors (a class whose unchanged set is empty is scored by its
    bare photo prompt instead), a_new with D_new, a_prev with D_prev.
    Added descriptors are positive iff a_new > a_u; deleted descriptors
    are negative iff a_prev > a_u. Unchanged descriptors leave no trace.
    """
    added: dict[str, list[str]] = {}
    deleted: dict[str, list[str]] = {}
    unchanged_entries: dict[str, list[str]] = {}
    for c in sorted(d_new.entries):
        new_list = d_new.entries[c]
        prev_list = d_prev.entries.get(c, [])
        prev_set = set(prev_list)
        new_set = set(new_list)
        unchanged = [d for d in new_list if d in prev_set]
        added[c] = [d for d in new_list if d not in prev_set]
        deleted[c] = [d for d in prev_list if d not in new_set]
        unchanged_entries[c] = unchanged if unchanged else [BARE_DESCRIPTOR]

    if not any(added.values()) and not any(deleted.values()):
        return list(memory), {"event": "memory", "added": 0, "deleted": 0}

    ds_u = DescriptorSet(unchanged_entries)
    a_u = _evaluate(images, ds_u, embedder, config).overall_accuracy
    a_new = _evaluate(images, d_new, embedder, config).overall_accuracy
    a_prev = _evaluate(images, d_prev, embedder, config).overall_accuracy

    added_polarity = POSITIVE if a_new > a_u else NEGATIVE
    deleted_polarity = NEGATIVE if a_prev > a_u else POSITIVE

    out = list(memory)
    n_added = n_deleted = 0
    for c in sorted(d_new.entries):
        for d in added[c]:
            out.append(MemoryRecord(c, d, iteration, added_polarity))
            n_added += 1
        for d in deleted[c]:
            out.append(MemoryRecord(c, d, iteration, deleted_polarity))
            n_deleted += 1
    info = {
        "event": "memory",
        "accuracy_unchanged": a_u,
        "accuracy_new": a_new,
        "accuracy_prev": a_prev,
        "added": n_added,
        "deleted": n_deleted,
        "added_polarity": added_polarity,
        "deleted_polarity": deleted_polarity,
    }
    return out, info


def step(
    state: RunState,
    config: RunConfig,
    provider: ChatProvider,
    embedder: TextEmbedder,
    images: Sequence[LabeledEmbedding],
    checkpoint_dir: str | Path | None = None,
    logger: RunLogger | None = None,
) -> RunState:
    """One full iteration; returns the successor state.

    Any error raised here leaves the previous checkpoint as the latest
    one on disk, so a resumed run redoes this iteration.
    """
    iteration = state.iteration + 1

    reps = class_representatives(
        state.current,
        _embeddings_for(embedder, state.current, config.photo_prefix),
        config.photo_prefix,
    )
    k = default_k(len(reps), config.cluster_target_size)
    clusters = kmeans(reps, k, derive_seed(config.rng_seed, f"kmeans:{iteration}"))

    previous_feedback = _evaluate(images, state.current, embedder, config)
    feedback_text = feedback_to_text(previous_feedback)
    memory_text = render_memory(state.memory)

    winners: dict[str, list[str]] = {}
    cluster_logs: list[dict] = []
    for j, members in enumerate(clusters.clusters):
        member_set = set(members)
        has_images = config.global_selection or any(
            im.label in member_set for im in images
        )
        if not has_images:
            # nothing to measure fitness against; keep this cluster as is
            cluster_logs.append(
                {"cluster": j, "classes": members, "skipped": "no images"}
            )
            continue
        ds_cluster = state.current.restrict(members)
        mutants, events = mutate_cluster(
            ds_cluster, feedback_text, memory_text, config, provider
        )
        mutant_feedbacks = evaluate_candidates(
            mutants, members, state.current, images, embedder, config
        )
        crossed, xo_events = crossover_cluster(
            list(zip(mutants, mutant_feedbacks)), config, provider
        )
        pool = list(mutants) + [crossed]
        pool_feedbacks = mutant_feedbacks + evaluate_candidates(
            [crossed], members, state.current, images, embedder, config
        )
        winner, pool_feedbacks = select_cluster(
            pool, members, state.current, images, embedder, config, pool_feedbacks
        )
        winners.update(pool[winner].entries)
        cluster_logs.append(
            {
                "cluster": j,
                "classes": members,
                "candidate_fitness": [fitness(fb) for fb in pool_feedbacks],
                "winner": winner,
                "events": events + xo_events,
            }
        )

    d_new = state.current.splice(DescriptorSet(winners))
    new_memory, memory_info = update_memory(
        state.memory, state.current, d_new, images, embedder, config, iteration
    )

    new_feedback = _evaluate(images, d_new, embedder, config)
    new_fitness = fitness(new_feedback)
    if new_fitness > state.global_best_fitness:
        global_best, global_best_fitness = d_new.copy(), new_fitness
    else:
        global_best, global_best_fitness = state.global_best, state.global_best_fitness

    new_state = RunState(
        iteration=iteration,
        current=d_new,
        global_best=global_best,
        global_best_fitness=global_best_fitness,
        memory=new_memory,
        rng_seed=state.rng_seed,
        clusters=clusters,
    )
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        new_state.save(checkpoint_dir / f"checkpoint_{iteration:04d}.json")
    if logger is not None:
        logger.log(
            {
                "event": "iteration",
                "iteration": iteration,
                "fitness": new_fitness,
                "global_best_fitness": global_best_fitness,
                "clusters": cluster_logs,
                "memory": memory_info,
                "memory_size": {
                    "positive": sum(1 for r in new_memory if r.polarity == POSITIVE),
                    "negative": sum(1 for r in new_memory if r.polarity == NEGATIVE),
                },
                "tokens_used": provider.tokens_used,
                "feedback": new_feedback.to_json_obj(),
            }
        )
    return new_state


def latest_checkpoint(checkpoint_dir: str | Path) -> Path | None:
    checkpoint_dir = Path(checkpoint_dir)
    if not checkpoint_dir.is_dir():
        return None
    best: tuple[int, Path] | None = None
    for entry in checkpoint_dir.iterdir():
        match = _CHECKPOINT_RE.match(entry.name)
        if match:
            n = int(match.group(1))
            if best is None or n > best[0]:
                best = (n, entry)
    return best[1] if best else None


def run(
    classes: Sequence[ClassLabel],
    config: RunConfig,
    provider: ChatProvider,
    embedder: TextEmbedder,
    images: Sequence[LabeledEmbedding],
    out_dir: str | Path | None = None,
    resume: bool = False,
) -> tuple[RunState, list[dict]]:
    """Full optimization: initialize, then N iterations.

    With an output directory, writes checkpoints/, run_log.jsonl and
    final_descriptors.json there. With resume=True and an existing
    checkpoint, continues from the last completed iteration instead of
    re-initializing.
    """
    if not images:
        raise DataError("at least one optimization image is required")
    checkpoint_dir = None
    log_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_dir = out_dir / "checkpoints"
        log_path = out_dir / "run_log.jsonl"

    state = None
    resumed = False
    if resume and checkpoint_dir is not None:
        found = latest_checkpoint(checkpoint_dir)
        if found is not None:
            state = RunState.load(found)
            resumed = True

    with RunLogger(log_path, append=resumed) as logger:
        if state is None:
            state, feedback = initialize(classes, config, provider, embedder, images)
            assert feedback is not None
            logger.log(
                {
                    "event": "init",
                    "iteration": 0,
                    "fitness": fitness(feedback),
                    "global_best_fitness": state.global_best_fitness,
                    "clusters": state.clusters.to_json_obj(),
                    "tokens_used": provider.tokens_used,
                    "feedback": feedback.to_json_obj(),
                }
            )
        else:
            logger.log({"event": "resume", "iteration": state.iteration})
        while state.iteration < config.n_iterations:
            state = step(state, config, provider, embedder, images, checkpoint_dir, logger)
        entries = logger.entries
    if out_dir is not None:
        state.global_best.save(Path(out_dir) / "final_descriptors.json")
    return state, entries
