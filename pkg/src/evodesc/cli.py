"""Command-line front end.

Subcommands: optimize (run the full loop), evaluate (score a descriptor
file against any embedding archive), feedback (print the confusion
report exactly as an LLM prompt would embed it), embed-mock (generate
deterministic mock archives for tests and demos).

Exit codes: 0 success, 1 configuration error, 2 provider error, 3 data
error; each failure prints a one-line diagnostic to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .archive import EmbeddingArchive, read_archive, write_archive
from .evolution import run
from .llm import ChatProvider, HttpProvider, ReplayProvider
from .mockembed import mock_embed
from .scoring import evaluate_feedback, feedback_to_text, render_bare, render_prompt, rendered_prompts
from .textembed import TextEmbedder, make_text_embedder
from .types import (
    ConfigError,
    DataError,
    DescriptorSet,
    EvodescError,
    LabeledEmbedding,
    ProviderError,
    RunConfig,
    bare_descriptor_set,
    is_valid_class_label,
    validate_descriptor_set,
)

# keys a config file may set besides the RunConfig fields
_FILE_CLI_KEYS = (
    "image_archive",
    "text_embedder",
    "provider",
    "endpoint",
    "model",
    "credential_env",
    "replay_script",
)

_CONFIG_FLAGS = (
    "n_iterations",
    "n_init",
    "n_change",
    "n_mutants",
    "lam",
    "top_m",
    "cluster_target_size",
    "temperature",
    "rng_seed",
    "max_tokens",
    "photo_prefix",
    "global_selection",
    "workers",
)


def _load_json_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"config file {p} must contain a JSON object")
    return obj


def _merge_config(args: argparse.Namespace) -> tuple[RunConfig, dict]:
    """RunConfig plus CLI-level settings from file and flags (flags win)."""
    file_obj = _load_json_config(args.config) if args.config else {}
    cli_settings = {k: file_obj.pop(k) for k in _FILE_CLI_KEYS if k in file_obj}
    config = RunConfig.from_json_obj(file_obj)

    merged = config.to_json_obj()
    for name in _CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            merged["lambda" if name == "lam" else name] = value
    config = RunConfig.from_json_obj(merged)

    for key in _FILE_CLI_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cli_settings[key] = value
    return config, cli_settings


def _load_image_archive(path: str | None) -> EmbeddingArchive:
    if not path:
        raise ConfigError("an image archive is required (--image-archive)")
    p = Path(path)
    if not p.exists():
        raise DataError(f"image archive not found: {p}")
    return read_archive(p)


def _build_embedder(mode: str | None, archive: EmbeddingArchive) -> TextEmbedder:
    if not mode:
        raise ConfigError("a text embedder is required (--text-embedder)")
    embedder = make_text_embedder(mode)
    if embedder.dimension is not None and embedder.dimension != archive.dimension:
        raise DataError(
            f"text embedder dimension {embedder.dimension} does not match "
            f"image archive dimension {archive.dimension}"
        )
    return embedder


def _build_provider(settings: dict) -> ChatProvider:
    kind = settings.get("provider")
    if not kind:
        raise ConfigError("a provider is required (--provider http|replay)")
    if kind == "http":
        endpoint = settings.get("endpoint")
        model = settings.get("model")
        if not endpoint or not model:
            raise ConfigError("the http provider needs --endpoint and --model")
        return HttpProvider(
            endpoint=endpoint,
            model=model,
            credential_env=settings.get("credential_env") or "EVODESC_API_KEY",
        )
    if kind == "replay":
        script = settings.get("replay_script")
        if not script:
            raise ConfigError("the replay provider needs --replay-script")
        if not Path(script).exists():
            raise ProviderError(f"replay script not found: {script}")
        return ReplayProvider(script)
    raise ConfigError(f"unknown provider {kind!r}; expected http or replay")


def _load_descriptors(args: argparse.Namespace, archive: EmbeddingArchive) -> DescriptorSet:
    if getattr(args, "bare", False):
        return bare_descriptor_set(sorted(set(r.label for r in archive.records)))
    if not args.descriptors:
        raise ConfigError("a descriptor file is required (--descriptors or --bare)")
    p = Path(args.descriptors)
    if not p.exists():
        raise DataError(f"descriptor file not found: {p}")
    ds = DescriptorSet.load(p)
    violations = validate_descriptor_set(ds, ds.classes())
    if violations:
        raise DataError(f"invalid descriptor file: {violations[0]}")
    return ds


def _check_archive_classes(ds: DescriptorSet, archive: EmbeddingArchive) -> None:
    missing = sorted(set(r.label for r in archive.records) - set(ds.entries))
    if missing:
        raise DataError(
            f"archive classes missing from the descriptor set: {missing}"
        )


def _feedback_for(args: argparse.Namespace):
    lam = args.lam if args.lam is not None else 0.9
    top_m = args.top_m if args.top_m is not None else 3
    if not 0.0 < lam <= 1.0:
        raise ConfigError(f"lambda must be in (0, 1], got {lam}")
    if top_m < 1:
        raise ConfigError(f"top-m must be >= 1, got {top_m}")
    archive = _load_image_archive(args.image_archive)
    ds = _load_descriptors(args, archive)
    _check_archive_classes(ds, archive)
    embedder = _build_embedder(args.text_embedder, archive)
    photo_prefix = bool(getattr(args, "photo_prefix", False))
    embeddings = embedder.embed(rendered_prompts(ds, photo_prefix))
    return evaluate_feedback(
        list(archive.records), ds, embeddings, lam, top_m, photo_prefix
    )


def cmd_optimize(args: argparse.Namespace) -> int:
    config, settings = _merge_config(args)
    archive = _load_image_archive(settings.get("image_archive"))
    embedder = _build_embedder(settings.get("text_embedder"), archive)
    provider = _build_provider(settings)
    if not args.out:
        raise ConfigError("an output directory is required (--out)")
    classes = sorted(set(r.label for r in archive.records))
    state, _entries = run(
        classes,
        config,
        provider,
        embedder,
        list(archive.records),
        out_dir=args.out,
        resume=args.resume,
    )
    print(
        f"finished at iteration {state.iteration} with best fitness "
        f"{state.global_best_fitness:.4f}; wrote {Path(args.out) / 'final_descriptors.json'}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    feedback = _feedback_for(args)
    print(json.dumps(feedback.to_json_obj(), ensure_ascii=False, indent=2, sort_keys=True))
    return 0


def cmd_feedback(args: argparse.Namespace) -> int:
    feedback = _feedback_for(args)
    print(feedback_to_text(feedback))
    print()
    print(json.dumps(feedback.to_json_obj(), ensure_ascii=False, sort_keys=True))
    return 0


def _read_class_list(path: str) -> list[str]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"class list file not found: {p}")
    classes: list[str] = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        name = line.strip()
        if not name:
            continue
        if not is_valid_class_label(name):
            raise DataError(f"invalid class name on line {lineno}: {line!r}")
        if name in classes:
            raise DataError(f"duplicate class name on line {lineno}: {name!r}")
        classes.append(name)
    if not classes:
        raise DataError(f"class list file {p} contains no classes")
    return classes


def cmd_embed_mock(args: argparse.Namespace) -> int:
    if args.dimension < 2:
        raise ConfigError("dimension must be >= 2")
    if args.images_per_class < 1:
        raise ConfigError("images-per-class must be >= 1")
    if args.noise < 0:
        raise ConfigError("noise must be >= 0")
    classes = _read_class_list(args.classes)
    ds = None
    if args.descriptors:
        p = Path(args.descriptors)
        if not p.exists():
            raise DataError(f"descriptor file not found: {p}")
        ds = DescriptorSet.load(p)
        for c in classes:
            if c not in ds.entries:
                raise DataError(f"descriptor file has no entry for class {c!r}")
    photo_prefix = bool(args.photo_prefix)

    text_records: list[LabeledEmbedding] = []
    seen_prompts: set[str] = set()
    for c in classes:
        prompts = [render_bare(c)]
        if ds is not None:
            prompts.extend(render_prompt(c, d, photo_prefix) for d in ds.entries[c])
        for prompt in prompts:
            if prompt in seen_prompts:
                continue
            seen_prompts.add(prompt)
            vec = mock_embed(prompt, args.dimension).astype(np.float32)
            text_records.append(LabeledEmbedding(label=c, key=prompt, vector=vec))

    rng = np.random.default_rng(args.seed)
    image_records: list[LabeledEmbedding] = []
    for c in classes:
        base = mock_embed(render_bare(c), args.dimension)
        for i in range(args.images_per_class):
            vec = base + args.noise * rng.standard_normal(args.dimension)
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                raise DataError(f"degenerate zero image vector for class {c!r}")
            vec = (vec / norm).astype(np.float32)
            image_records.append(
                LabeledEmbedding(label=c, key=f"{c}/{i:04d}", vector=vec)
            )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    texts_path = out / "texts.emb"
    images_path = out / "images.emb"
    write_archive(EmbeddingArchive(args.dimension, text_records), texts_path)
    write_archive(EmbeddingArchive(args.dimension, image_records), images_path)
    print(f"wrote {texts_path} ({len(text_records)} prompts)")
    print(f"wrote {images_path} ({len(image_records)} images)")
    return 0


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--descriptors", help="descriptor JSON file")
    p.add_argument("--bare", action="store_true", help="score with the plain photo template")
    p.add_argument("--image-archive", required=True)
    p.add_argument("--text-embedder", required=True, help="archive:PATH | mock:DIM | command:TEMPLATE")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="confusion threshold (default 0.9)")
    p.add_argument("--top-m", type=int, default=None, help="confusion rows per class (default 3)")
    p.add_argument("--photo-prefix", action="store_true", default=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evodesc",
        description="Evolve class descriptors for embedding-based zero-shot classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run the full optimization loop")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--image-archive")
    p.add_argument("--text-embedder", help="archive:PATH | mock:DIM | command:TEMPLATE")
    p.add_argument("--provider", choices=("http", "replay"))
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--credential-env")
    p.add_argument("--replay-script")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    p.add_argument("--iterations", dest="n_iterations", type=int, default=None)
    p.add_argument("--n-init", type=int, default=None)
    p.add_argument("--n-change", type=int, default=None)
    p.add_argument("--mutants", dest="n_mutants", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--top-m", type=int, default=None)
    p.add_argument("--cluster-target-size", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--seed", dest="rng_seed", type=int, default=None)
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--photo-prefix", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--global-selection", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="score a descriptor set against an archive")
    _add_eval_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("feedback", help="print the classification feedback report")
    _add_eval_flags(p)
    p.set_defaults(func=cmd_feedback)

    p = sub.add_parser("embed-mock", help="generate deterministic mock archives")
    p.add_argument("--classes", required=True, help="file with one class name per line")
    p.add_argument("--descriptors", help="optional descriptor JSON file")
    p.add_argument("--dimension", type=int, required=True)
    p.add_argument("--images-per-class", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma before renormalizing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--photo-prefix", action="store_true", default=False)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_embed_mock)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ProviderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EvodescError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
