from __future__ import annotations

import json
import math

import numpy as np
import pytest

from testutil import TableEmbedder, descriptor_json, image, unit

from evodesc.evolution import (
    RunLogger,
    RunState,
    crossover_cluster,
    initialize,
    latest_checkpoint,
    mutate_cluster,
    run,
    select_cluster,
    step,
    update_memory,
)
from evodesc.clustering import ClusterAssignment
from evodesc.llm import ChatProvider, ReplayProvider, ScriptedProvider, _extract_json_object
from evodesc.textembed import MockTextEmbedder, TextEmbedder
from evodesc.types import (
    DataError,
    DescriptorSet,
    MemoryRecord,
    NEGATIVE,
    POSITIVE,
    ProviderError,
    ResponseParseError,
    RunConfig,
    VisualFeedback,
)

GARBAGE = "I'd rather not answer in JSON today."


def config(**overrides):
    base = dict(
        n_iterations=2,
        n_init=1,
        n_change=1,
        n_mutants=2,
        cluster_target_size=10,
        rng_seed=0,
    )
    base.update(overrides)
    return RunConfig(**base)


def feedback(overall, per_class=None):
    return VisualFeedback(overall, per_class or {}, {})


class EchoProvider(ChatProvider):
    """Valid responses derived from the request itself.

    Initialization prompts get generated descriptors for the listed
    classes; mutation and crossover prompts get their first embedded
    descriptor JSON echoed back, so the descriptor set never changes.
    """

    kind = "echo"
    parallel_safe = True

    def __init__(self, n_init=1):
        super().__init__()
        self.n_init = n_init
        self.calls = 0

    def _complete(self, request):
        with self._lock:
            self.calls += 1
        try:
            obj = _extract_json_object(request.user)
        except ResponseParseError:
            classes = [
                line[2:].strip()
                for line in request.user.splitlines()
                if line.startswith("- ")
            ]
            obj = {
                c: [f"{c} feature {i}" for i in range(self.n_init)] for c in classes
            }
        return json.dumps(obj), 0


class ProbeEmbedder(TextEmbedder):
    """Delegates to an inner embedder and records every prompt asked."""

    def __init__(self, inner):
        self.inner = inner
        self.dimension = inner.dimension
        self.prompts: list[str] = []

    def embed(self, pairs):
        self.prompts.extend(p for _c, p in pairs)
        return self.inner.embed(pairs)


class TestRunState:
    def make_state(self):
        return RunState(
            iteration=3,
            current=DescriptorSet({"a": ["x"], "b": ["y"]}),
            global_best=DescriptorSet({"a": ["x0"], "b": ["y"]}),
            global_best_fitness=0.625,
            memory=[MemoryRecord("a", "x", 2, POSITIVE)],
            rng_seed=42,
            clusters=ClusterAssignment([["a"], ["b"]]),
        )

    def test_json_round_trip(self):
        state = self.make_state()
        assert RunState.from_json_obj(state.to_json_obj()) == state

    def test_save_load(self, tmp_path):
        state = self.make_state()
        path = tmp_path / "checkpoint_0003.json"
        state.save(path)
        assert RunState.load(path) == state
        # atomic write leaves no temp file behind
        assert list(tmp_path.iterdir()) == [path]

    def test_save_is_deterministic_bytes(self, tmp_path):
        state = self.make_state()
        state.save(tmp_path / "a.json")
        state.save(tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestRunLogger:
    def test_collects_and_mirrors(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with RunLogger(path) as logger:
            logger.log({"event": "one", "z": 1, "a": 2})
            logger.log({"event": "two"})
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[0]) == {"event": "one", "z": 1, "a": 2}
        # keys are sorted in the file for byte-stable logs
        assert lines[0].index('"a"') < lines[0].index('"z"')

    def test_append_mode(self, tmp_path):
        path = tmp_path / "log.jsonl"
        with RunLogger(path) as logger:
            logger.log({"event": "first"})
        with RunLogger(path, append=True) as logger:
            logger.log({"event": "second"})
        events = [json.loads(ln)["event"] for ln in path.read_text().splitlines()]
        assert events == ["first", "second"]

    def test_no_path_collects_only(self):
        with RunLogger() as logger:
            logger.log({"event": "x"})
        assert logger.entries == [{"event": "x"}]


class TestInitialize:
    def test_single_cluster_single_call(self):
        provider = ScriptedProvider([descriptor_json({"hen": ["pecks"], "owl": ["hoots"]})])
        state, feedback = initialize(
            ["owl", "hen"], config(), provider, MockTextEmbedder(8)
        )
        assert state.iteration == 0
        assert state.current.entries == {"hen": ["pecks"], "owl": ["hoots"]}
        assert state.global_best == state.current
        assert state.global_best is not state.current
        assert math.isnan(state.global_best_fitness)
        assert feedback is None
        assert state.memory == []
        assert state.clusters.k == 1
        assert len(provider.requests) == 1
        assert "- hen" in provider.requests[0].user

    def test_duplicate_classes_deduped(self):
        provider = ScriptedProvider([descriptor_json({"hen": ["pecks"]})])
        state, _ = initialize(["hen", "hen"], config(), provider, MockTextEmbedder(8))
        assert state.current.classes() == ["hen"]

    def test_fifteen_classes_two_clusters(self):
        classes = [f"class {i:02d}" for i in range(15)]
        provider = EchoProvider(n_init=2)
        state, _ = initialize(
            classes, config(n_init=2), provider, MockTextEmbedder(8)
        )
        assert provider.calls == 2
        assert state.clusters.k == 2
        assert sorted(c for m in state.clusters.clusters for c in m) == classes
        assert sorted(state.current.classes()) == classes
        assert all(len(state.current.entries[c]) == 2 for c in classes)

    def test_images_give_initial_fitness(self):
        provider = EchoProvider()
        embedder = MockTextEmbedder(8)
        images = [image("hen", [1, 0, 0, 0, 0, 0, 0, 1]), image("owl", [0, 1, 0, 0, 0, 0, 1, 0])]
        state, feedback = initialize(["hen", "owl"], config(), provider, embedder, images)
        assert feedback is not None
        assert state.global_best_fitness == feedback.overall_accuracy
        assert 0.0 <= state.global_best_fitness <= 1.0

    def test_parse_retry_consumes_second_response(self):
        provider = ScriptedProvider([GARBAGE, descriptor_json({"hen": ["pecks"]})])
        state, _ = initialize(["hen"], config(), provider, MockTextEmbedder(8))
        assert state.current.entries == {"hen": ["pecks"]}
        assert len(provider.requests) == 2

    def test_persistent_parse_failure_names_cluster(self):
        provider = ScriptedProvider([GARBAGE, GARBAGE])
        with pytest.raises(ResponseParseError, match="initialization of cluster 0"):
            initialize(["hen"], config(), provider, MockTextEmbedder(8))

    def test_provider_error_names_cluster(self):
        with pytest.raises(ProviderError, match="initialization of cluster 0"):
            initialize(["hen"], config(), ScriptedProvider([]), MockTextEmbedder(8))

    def test_empty_class_list_rejected(self):
        with pytest.raises(DataError):
            initialize([], config(), ScriptedProvider([]), MockTextEmbedder(8))


class TestMutateCluster:
    def setup_method(self):
        self.ds = DescriptorSet({"a": ["old a"], "b": ["old b"]})

    def mutate(self, provider, **overrides):
        return mutate_cluster(self.ds, "feedback", "memory", config(**overrides), provider)

    def test_k_candidates_in_order(self):
        responses = [
            descriptor_json({"a": [f"v{i} a"], "b": [f"v{i} b"]}) for i in range(3)
        ]
        candidates, events = self.mutate(ScriptedProvider(responses), n_mutants=3)
        assert [c.entries["a"] for c in candidates] == [["v0 a"], ["v1 a"], ["v2 a"]]
        assert events == []

    def test_single_shared_request_text(self):
        provider = ScriptedProvider(
            [descriptor_json({"a": ["x"], "b": ["y"]})] * 2
        )
        self.mutate(provider)
        assert len(provider.requests) == 2
        assert provider.requests[0] == provider.requests[1]
        assert self.ds.to_json() in provider.requests[0].user

    def test_parse_retry_succeeds(self):
        good = descriptor_json({"a": ["new a"], "b": ["new b"]})
        other = descriptor_json({"a": ["other a"], "b": ["other b"]})
        candidates, events = self.mutate(ScriptedProvider([GARBAGE, good, other]))
        assert candidates[0].entries["a"] == ["new a"]
        assert candidates[1].entries["a"] == ["other a"]
        assert events == []

    def test_fallback_to_copy_after_two_failures(self):
        good = descriptor_json({"a": ["new a"], "b": ["new b"]})
        candidates, events = self.mutate(ScriptedProvider([GARBAGE, GARBAGE, good]))
        assert candidates[0] == self.ds
        assert candidates[0] is not self.ds
        assert candidates[1].entries["a"] == ["new a"]
        assert len(events) == 1
        assert events[0]["event"] == "mutation_fallback"
        assert events[0]["candidate"] == 0

    def test_all_candidates_failing_is_an_error(self):
        with pytest.raises(ProviderError, match="all 2 mutation"):
            self.mutate(ScriptedProvider([GARBAGE] * 4))

    def test_parallel_workers_keep_candidate_order(self):
        # a replay provider is parallel safe; both candidates share one
        # request digest, so they resolve to the same recorded response
        response = descriptor_json({"a": ["same a"], "b": ["same b"]})
        scripted = ScriptedProvider([response])
        mutate_cluster(self.ds, "feedback", "memory", config(n_mutants=1), scripted)
        from evodesc.llm import request_digest

        req = scripted.requests[0]
        replay = ReplayProvider({request_digest(req.system, req.user): response})
        candidates, events = mutate_cluster(
            self.ds, "feedback", "memory", config(n_mutants=4, workers=4), replay
        )
        assert len(candidates) == 4
        assert all(c.entries["a"] == ["same a"] for c in candidates)
        assert events == []


class TestCrossoverCluster:
    def test_parses_combined_set(self):
        cands = [
            (DescriptorSet({"a": ["x"]}), feedback(0.5, {"a": 0.5})),
            (DescriptorSet({"a": ["y"]}), feedback(0.7, {"a": 0.7})),
        ]
        provider = ScriptedProvider([descriptor_json({"a": ["x+y"]})])
        ds, events = crossover_cluster(cands, config(), provider)
        assert ds.entries == {"a": ["x+y"]}
        assert events == []

    def test_fallback_picks_fittest_candidate(self):
        cands = [
            (DescriptorSet({"a": ["x"]}), feedback(0.2)),
            (DescriptorSet({"a": ["y"]}), feedback(0.9)),
            (DescriptorSet({"a": ["z"]}), feedback(0.5)),
        ]
        ds, events = crossover_cluster(cands, config(), ScriptedProvider([GARBAGE] * 2))
        assert ds.entries == {"a": ["y"]}
        assert ds is not cands[1][0]
        assert events[0]["event"] == "crossover_fallback"
        assert events[0]["fallback_candidate"] == 1

    def test_fallback_tie_goes_to_lowest_index(self):
        cands = [
            (DescriptorSet({"a": ["x"]}), feedback(0.5)),
            (DescriptorSet({"a": ["y"]}), feedback(0.5)),
        ]
        ds, events = crossover_cluster(cands, config(), ScriptedProvider([GARBAGE] * 2))
        assert ds.entries == {"a": ["x"]}
        assert events[0]["fallback_candidate"] == 0

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValueError):
            crossover_cluster([], config(), ScriptedProvider([]))


class TestSelectCluster:
    def planted_world(self, basis):
        e = basis
        current = DescriptorSet({"a": ["old"], "b": ["base"]})
        candidates = [
            DescriptorSet({"a": [f"cand{k}"], "b": ["base"]}) for k in range(3)
        ]
        table = {
            "a, which old": e[4],
            "a, which cand0": e[1],
            "a, which cand1": e[2],
            "a, which cand2": e[3],
            "b, which base": e[0],
        }
        targets = [0] * 2 + [1] * 5 + [2] * 3
        images = [
            image("a", e[t + 1] + 0.3 * e[0], key=f"a/{j}")
            for j, t in enumerate(targets)
        ]
        return candidates, current, images, TableEmbedder(table, 8)

    def test_planted_accuracies_pick_the_best(self, basis8):
        candidates, current, images, embedder = self.planted_world(basis8)
        winner, feedbacks = select_cluster(
            candidates, ["a", "b"], current, images, embedder, config()
        )
        assert [fb.overall_accuracy for fb in feedbacks] == pytest.approx(
            [0.2, 0.5, 0.3]
        )
        assert winner == 1

    def test_tie_broken_to_lowest_index(self):
        candidates = [DescriptorSet({"a": ["x"]}), DescriptorSet({"a": ["y"]})]
        feedbacks = [feedback(0.5), feedback(0.5)]
        winner, _ = select_cluster(
            candidates, ["a"], DescriptorSet({"a": ["x"]}), [], MockTextEmbedder(4),
            config(), feedbacks=feedbacks,
        )
        assert winner == 0

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValueError):
            select_cluster([], ["a"], DescriptorSet({"a": ["x"]}), [], MockTextEmbedder(4), config())


class TestUpdateMemory:
    def test_no_diff_short_circuits_without_evaluating(self):
        ds = DescriptorSet({"a": ["x"], "b": ["y"]})
        # this embedder raises on any prompt, so reaching it would fail
        embedder = TableEmbedder({}, 4)
        before = [MemoryRecord("a", "old", 1, NEGATIVE)]
        records, info = update_memory(
            before, ds, ds.copy(), [image("a", [1, 0])], embedder, config(), 5
        )
        assert records == before
        assert records is not before
        assert info == {"event": "memory", "added": 0, "deleted": 0}

    def test_positive_added_positive_deleted(self, basis8):
        e = basis8
        table = {
            "a, which good": e[1],
            "a, which bad": e[3],
            "b, which base": e[2],
            "A photo of a a": e[3],
        }
        images = [image("a", e[1] + 0.3 * e[2], key="a/0"), image("b", e[2], key="b/0")]
        d_prev = DescriptorSet({"a": ["bad"], "b": ["base"]})
        d_new = DescriptorSet({"a": ["good"], "b": ["base"]})
        records, info = update_memory(
            [], d_prev, d_new, images, TableEmbedder(table, 8), config(), 4
        )
        assert info["accuracy_unchanged"] == 0.5
        assert info["accuracy_new"] == 1.0
        assert info["accuracy_prev"] == 0.5
        assert records == [
            MemoryRecord("a", "good", 4, POSITIVE),
            MemoryRecord("a", "bad", 4, POSITIVE),
        ]

    def test_negative_added_negative_deleted(self, basis8):
        e = basis8
        table = {
            "a, which good": e[1],
            "a, which bad": e[3],
            "b, which base": e[2],
            "A photo of a a": e[3],
        }
        images = [image("a", e[1] + 0.3 * e[2], key="a/0"), image("b", e[2], key="b/0")]
        d_prev = DescriptorSet({"a": ["good"], "b": ["base"]})
        d_new = DescriptorSet({"a": ["bad"], "b": ["base"]})
        records, info = update_memory(
            [], d_prev, d_new, images, TableEmbedder(table, 8), config(), 4
        )
        assert info["accuracy_new"] == 0.5
        assert info["accuracy_prev"] == 1.0
        assert records == [
            MemoryRecord("a", "bad", 4, NEGATIVE),
            MemoryRecord("a", "good", 4, NEGATIVE),
        ]

    def test_bare_prompt_fallback_for_fully_replaced_class(self):
        inner = MockTextEmbedder(8)
        probe = ProbeEmbedder(inner)
        d_prev = DescriptorSet({"a": ["y"], "b": ["z"]})
        d_new = DescriptorSet({"a": ["x"], "b": ["z"]})
        update_memory(
            [], d_prev, d_new, [image("a", [1, 0, 0, 0, 0, 0, 0, 0])], probe, config(), 1
        )
        assert "A photo of a a" in probe.prompts
        assert "A photo of a b" not in probe.prompts

    def test_record_order_and_appending(self):
        prompts = [
            "a, which k", "a, which x1", "a, which x2", "a, which y1",
            "b, which p", "b, which q", "b, which r",
        ]
        v = unit([1, 0, 0, 0])
        table = {p: v for p in prompts}
        images = [image("a", v, key="a/0")]
        d_prev = DescriptorSet({"a": ["k", "x1", "x2"], "b": ["p", "q"]})
        d_new = DescriptorSet({"a": ["k", "y1"], "b": ["q", "r"]})
        before = [MemoryRecord("z", "kept", 1, POSITIVE)]
        records, info = update_memory(
            before, d_prev, d_new, images, TableEmbedder(table, 4), config(), 7
        )
        # every descriptor set scores identically, so nothing is strictly
        # better: additions negative, deletions positive
        assert info["added"] == 2
        assert info["deleted"] == 3
        assert records == before + [
            MemoryRecord("a", "y1", 7, NEGATIVE),
            MemoryRecord("a", "x1", 7, POSITIVE),
            MemoryRecord("a", "x2", 7, POSITIVE),
            MemoryRecord("b", "r", 7, NEGATIVE),
            MemoryRecord("b", "p", 7, POSITIVE),
        ]


def step_world(basis):
    """Two classes, one cluster; class a's descriptor decides fitness.

    With "bad" the a image goes to b (fitness 0.5), with "good" it is
    recovered (fitness 1.0).
    """
    e = basis
    table = {
        "a, which bad": e[3],
        "a, which good": e[1],
        "b, which bdb": e[2],
        "A photo of a a": e[3],
    }
    images = [image("a", e[1] + 0.3 * e[2], key="a/0"), image("b", e[2], key="b/0")]
    current = DescriptorSet({"a": ["bad"], "b": ["bdb"]})
    state = RunState(
        iteration=0,
        current=current,
        global_best=current.copy(),
        global_best_fitness=0.5,
        memory=[],
        rng_seed=0,
        clusters=ClusterAssignment([["a", "b"]]),
    )
    return state, images, TableEmbedder(table, 8)


class TestStep:
    def test_echo_fixed_point(self, basis8, tmp_path):
        state, images, embedder = step_world(basis8)
        echo = descriptor_json({"a": ["bad"], "b": ["bdb"]})
        provider = ScriptedProvider([echo] * 3)
        with RunLogger() as logger:
            new_state = step(
                state, config(), provider, embedder, images, tmp_path, logger
            )
        assert new_state.iteration == 1
        assert new_state.current == state.current
        assert new_state.memory == []
        # no strict improvement: the previous best object is kept
        assert new_state.global_best is state.global_best
        assert new_state.global_best_fitness == 0.5
        assert (tmp_path / "checkpoint_0001.json").exists()
        entry = logger.entries[0]
        assert entry["event"] == "iteration"
        assert entry["fitness"] == 0.5
        assert entry["memory"] == {"event": "memory", "added": 0, "deleted": 0}

    def test_improvement_updates_best_and_memory(self, basis8, tmp_path):
        state, images, embedder = step_world(basis8)
        good = descriptor_json({"a": ["good"], "b": ["bdb"]})
        bad = descriptor_json({"a": ["bad"], "b": ["bdb"]})
        provider = ScriptedProvider([good, bad, bad])
        with RunLogger() as logger:
            new_state = step(
                state, config(), provider, embedder, images, tmp_path, logger
            )
        assert new_state.current.entries == {"a": ["good"], "b": ["bdb"]}
        assert new_state.global_best_fitness == 1.0
        assert new_state.global_best == new_state.current
        assert new_state.memory == [
            MemoryRecord("a", "good", 1, POSITIVE),
            MemoryRecord("a", "bad", 1, POSITIVE),
        ]
        entry = logger.entries[0]
        assert entry["fitness"] == 1.0
        assert entry["global_best_fitness"] == 1.0
        assert entry["clusters"][0]["winner"] == 0
        assert entry["clusters"][0]["candidate_fitness"] == [1.0, 0.5, 0.5]
        assert entry["memory_size"] == {"positive": 2, "negative": 0}
        loaded = RunState.load(tmp_path / "checkpoint_0001.json")
        assert loaded == new_state

    def test_cluster_without_images_is_skipped(self):
        embedder = MockTextEmbedder(8)
        current = DescriptorSet({"a": ["da"], "b": ["db"]})
        state = RunState(
            iteration=0,
            current=current,
            global_best=current.copy(),
            global_best_fitness=1.0,
            memory=[],
            rng_seed=0,
            clusters=ClusterAssignment([["a", "b"]]),
        )
        images = [image("a", np.ones(8), key="a/0")]
        provider = EchoProvider()
        with RunLogger() as logger:
            new_state = step(
                state,
                config(cluster_target_size=1),
                provider,
                embedder,
                images,
                logger=logger,
            )
        entry = logger.entries[0]
        assert len(entry["clusters"]) == 2
        skipped = [cl for cl in entry["clusters"] if "skipped" in cl]
        assert len(skipped) == 1
        assert skipped[0]["classes"] == ["b"]
        assert new_state.current.entries["b"] == ["db"]
        # three calls for the live cluster, none for the skipped one
        assert provider.calls == 3


class TestLatestCheckpoint:
    def test_missing_dir(self, tmp_path):
        assert latest_checkpoint(tmp_path / "nope") is None

    def test_picks_highest_iteration(self, tmp_path):
        for n in (1, 3, 2):
            (tmp_path / f"checkpoint_{n:04d}.json").write_text("{}")
        (tmp_path / "checkpoint_9x.json").write_text("{}")
        (tmp_path / "notes.txt").write_text("ignore me")
        found = latest_checkpoint(tmp_path)
        assert found is not None
        assert found.name == "checkpoint_0003.json"

    def test_five_digit_iterations(self, tmp_path):
        (tmp_path / "checkpoint_0002.json").write_text("{}")
        (tmp_path / "checkpoint_10000.json").write_text("{}")
        assert latest_checkpoint(tmp_path).name == "checkpoint_10000.json"


class TestRun:
    def run_world(self):
        classes = ["hen", "owl", "yak"]
        embedder = MockTextEmbedder(8)
        from evodesc.mockembed import mock_embed
        from evodesc.scoring import render_bare

        images = [
            image(c, mock_embed(render_bare(c), 8), key=f"{c}/0") for c in classes
        ]
        return classes, embedder, images

    def test_zero_iterations_init_only(self, tmp_path):
        classes, embedder, images = self.run_world()
        provider = EchoProvider()
        state, entries = run(
            classes, config(n_iterations=0), provider, embedder, images, tmp_path
        )
        assert state.iteration == 0
        assert [e["event"] for e in entries] == ["init"]
        final = DescriptorSet.load(tmp_path / "final_descriptors.json")
        assert final == state.global_best
        assert not (tmp_path / "checkpoints").exists()

    def test_two_iterations_full_outputs(self, tmp_path):
        classes, embedder, images = self.run_world()
        provider = EchoProvider()
        state, entries = run(
            classes, config(n_iterations=2), provider, embedder, images, tmp_path
        )
        assert state.iteration == 2
        assert [e["event"] for e in entries] == ["init", "iteration", "iteration"]
        names = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
        assert names == ["checkpoint_0001.json", "checkpoint_0002.json"]
        log_lines = (tmp_path / "run_log.jsonl").read_text().splitlines()
        assert len(log_lines) == 3
        assert json.loads(log_lines[0])["event"] == "init"
        # echoed descriptors never change, so the best is the initial set
        assert state.global_best == state.current

    def test_resume_continues_from_checkpoint(self, tmp_path):
        classes, embedder, images = self.run_world()
        state1, _ = run(
            classes, config(n_iterations=1), EchoProvider(), embedder, images, tmp_path
        )
        assert state1.iteration == 1
        state2, entries = run(
            classes,
            config(n_iterations=3),
            EchoProvider(),
            embedder,
            images,
            tmp_path,
            resume=True,
        )
        assert state2.iteration == 3
        assert [e["event"] for e in entries] == ["resume", "iteration", "iteration"]
        events = [
            json.loads(ln)["event"]
            for ln in (tmp_path / "run_log.jsonl").read_text().splitlines()
        ]
        assert events == ["init", "iteration", "resume", "iteration", "iteration"]

    def test_resume_without_checkpoint_initializes(self, tmp_path):
        classes, embedder, images = self.run_world()
        state, entries = run(
            classes,
            config(n_iterations=0),
            EchoProvider(),
            embedder,
            images,
            tmp_path,
            resume=True,
        )
        assert entries[0]["event"] == "init"

    def test_empty_images_rejected(self):
        with pytest.raises(DataError):
            run(["hen"], config(), EchoProvider(), MockTextEmbedder(8), [])
