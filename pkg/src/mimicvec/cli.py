"""Command-line surface for the pipeline.

Subcommands: downsample, train, infer, eval-vecmap, eval-sim, probe,
compare. Options can come from a flat key=value config file (--config);
explicit flags win. Commands that write files drop a manifest.json with
input hashes, the seed, and the package version next to their outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    ContextSet,
    apply_downsample,
    build_downsample_plan,
    context_from_tokens,
    count_frequencies,
    load_plan,
    save_plan,
)
from .embeddings import EmbeddingSpace, load_text, save_text
from .evaluation import (
    compare_models,
    eval_probe,
    eval_similarity,
    fit_alignment,
    format_alignment_table,
    format_comparison_table,
    load_benchmark,
    load_context_file,
    load_probe_dataset,
    score_alignment,
    train_probe,
)
from .model import infer, trace_lines
from .training import SamplerConfig, load_checkpoint, save_checkpoint, train


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(directory, command: str, options: dict, inputs: list, outputs: list):
    manifest = {
        "command": command,
        "version": __version__,
        "options": {k: str(v) for k, v in sorted(options.items()) if v is not None},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    path = Path(directory) / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_config(path) -> dict:
    """Flat key=value lines; blank lines and #-comments ignored."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merge_options(args: argparse.Namespace, spec: dict) -> dict:
    """Fill unset flags from the config file, reject unknown config keys."""
    config = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = set(config) - set(spec)
    if unknown:
        raise ValueError(f"unknown config key {sorted(unknown)[0]!r}")
    merged = {}
    for key, (typ, default) in spec.items():
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            merged[key] = cli_value
        elif key in config:
            raw = config[key]
            merged[key] = raw.lower() in ("1", "true", "yes") if typ is bool else typ(raw)
        else:
            merged[key] = default
    return merged


def _require(options: dict, *keys):
    for key in keys:
        if options[key] is None:
            raise ValueError(f"missing required option --{key.replace('_', '-')}")


def _parse_inferred(specs) -> dict:
    """--inferred NAME=PATH (or bare PATH) occurrences into {name: space}."""
    named = {}
    for item in specs:
        if "=" in item:
            name, _, path = item.partition("=")
        else:
            name, path = Path(item).stem, item
        named[name] = load_text(path)
    return named


def _space_as_dict(space: EmbeddingSpace) -> dict:
    return {w: space[w] for w in space.words()}


def cmd_downsample(options: dict) -> int:
    _require(options, "corpus", "out_dir")
    out_dir = Path(options["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = count_frequencies(options["corpus"])
    plan = build_downsample_plan(
        corpus,
        options["seed"],
        words_per_bucket=options["words_per_bucket"],
        min_occurrences=options["min_occurrences"],
    )
    plan_path = out_dir / "plan.tsv"
    corpus_path = out_dir / "downsampled.txt"
    save_plan(plan, plan_path)
    removed = apply_downsample(options["corpus"], plan, corpus_path)
    summary_path = out_dir / "summary.txt"
    with open(summary_path, "w", encoding="utf-8") as fh:
        for i, bucket in enumerate(plan.buckets):
            fh.write(f"bucket {2 ** i}\t{len(bucket)} words\n")
        fh.write(f"tokens removed\t{removed}\n")
    print(f"plan: {plan_path}")
    print(f"downsampled corpus: {corpus_path} ({removed} tokens removed)")
    _write_manifest(
        out_dir, "downsample", options, [options["corpus"]],
        [plan_path, corpus_path, summary_path],
    )
    return 0


def cmd_train(options: dict) -> int:
    _require(options, "corpus", "embeddings", "out")
    corpus = count_frequencies(options["corpus"])
    space = load_text(options["embeddings"])
    config = SamplerConfig(
        min_frequency=options["min_frequency"],
        context_min=options["contexts_min"],
        context_max=options["contexts_max"],
        epochs=options["epochs"],
        rng_seed=options["seed"],
    )
    targets = None
    if options["include_targets"]:
        targets = load_plan(options["include_targets"]).words()
    out = Path(options["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = options["log"] or out.with_suffix(".log")
    checkpoint = train(
        corpus,
        space,
        config,
        attention_enabled=not options["no_attention"],
        target_words=targets,
        lr=options["lr"],
        batch_size=options["batch_size"],
        log_path=log_path,
    )
    save_checkpoint(checkpoint, out)
    print(f"checkpoint: {out}")
    inputs = [options["corpus"], options["embeddings"]]
    if options["include_targets"]:
        inputs.append(options["include_targets"])
    _write_manifest(out.parent, "train", options, inputs, [out, log_path])
    return 0


def cmd_infer(options: dict) -> int:
    _require(options, "checkpoint", "embeddings", "word", "contexts_file")
    checkpoint = load_checkpoint(options["checkpoint"])
    space = load_text(options["embeddings"])
    word = options["word"]
    sentences = []
    with open(options["contexts_file"], "r", encoding="utf-8") as fh:
        for line in fh:
            toks = line.split()
            if toks:
                sentences.append(toks)
    contexts = [context_from_tokens(word, toks) for toks in sentences]
    contexts = [c for c in contexts if len(c) > 0]
    context_set = ContextSet(word=word, contexts=tuple(contexts)) if contexts else None
    vector, trace = infer(word, context_set, checkpoint.params, space, mode=options["mode"])
    print(word + " " + " ".join(f"{c:.9g}" for c in vector))
    if options["trace"]:
        with open(options["trace"], "w", encoding="utf-8") as fh:
            fh.write("\n".join(trace_lines(trace)) + "\n")
    return 0


def cmd_eval_vecmap(options: dict) -> int:
    _require(options, "test_embeddings", "gold_embeddings", "plan", "inferred")
    test_space = load_text(options["test_embeddings"])
    gold_space = load_text(options["gold_embeddings"])
    plan = load_plan(options["plan"])
    plan_words = set(plan.words())
    dictionary = sorted(
        w for w in test_space.words() if w in gold_space and w not in plan_words
    )
    amap = fit_alignment(test_space, gold_space, dictionary)
    reports = {}
    for name, space in _parse_inferred(options["inferred"]).items():
        reports[name] = score_alignment(_space_as_dict(space), gold_space, amap, plan)
    table = format_alignment_table(reports)
    print(table, end="")
    if options["out"]:
        out = Path(options["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table, encoding="utf-8")
        inputs = [options["test_embeddings"], options["gold_embeddings"], options["plan"]]
        _write_manifest(out.parent, "eval-vecmap", options, inputs, [out])
    return 0


def cmd_eval_sim(options: dict) -> int:
    _require(options, "checkpoint", "embeddings", "benchmark", "contexts")
    checkpoint = load_checkpoint(options["checkpoint"])
    space = load_text(options["embeddings"])
    benchmark = load_benchmark(options["benchmark"])
    contexts = load_context_file(options["contexts"])

    def infer_fn(word):
        if word in contexts:
            sentence_contexts = [
                c for c in (context_from_tokens(word, s) for s in contexts[word]) if len(c) > 0
            ]
            context_set = (
                ContextSet(word=word, contexts=tuple(sentence_contexts))
                if sentence_contexts
                else None
            )
            vector, _ = infer(word, context_set, checkpoint.params, space, mode=options["mode"])
            return vector
        return space[word]

    rho = eval_similarity(benchmark, infer_fn, space)
    print(f"spearman\t{rho:.6f}")
    return 0


def _parse_bins(spec: str):
    edges = [int(x) for x in spec.split(",")]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bad --bins {spec!r}: need increasing comma-separated edges")
    return list(zip(edges, edges[1:]))


def cmd_probe(options: dict) -> int:
    _require(options, "train_set", "test_set", "embeddings")
    train_rows = load_probe_dataset(options["train_set"])
    test_rows = load_probe_dataset(options["test_set"])
    train_space = load_text(options["embeddings"])
    test_space = (
        load_text(options["test_embeddings"]) if options["test_embeddings"] else train_space
    )
    model = train_probe(train_rows, train_space, rng_seed=options["seed"])
    frequencies = None
    bins = None
    if options["bins"]:
        bins = _parse_bins(options["bins"])
        if not options["freq_corpus"]:
            raise ValueError("--bins requires --freq-corpus to count word frequencies")
        frequencies = count_frequencies(options["freq_corpus"]).frequency_table
    metrics = eval_probe(model, test_rows, test_space, frequencies=frequencies, bins=bins)
    print(f"accuracy\t{metrics.accuracy:.4f}")
    print(f"micro_f1\t{metrics.micro_f1:.4f}")
    for b in metrics.bins:
        acc = "-" if b.accuracy is None else f"{b.accuracy:.4f}"
        f1 = "-" if b.micro_f1 is None else f"{b.micro_f1:.4f}"
        print(f"bin[{b.low},{b.high})\tacc {acc}\tmicro_f1 {f1}\tn {b.count}")
    return 0


def cmd_compare(options: dict) -> int:
    _require(options, "inferred_a", "inferred_b", "test_embeddings", "gold_embeddings", "plan")
    test_space = load_text(options["test_embeddings"])
    gold_space = load_text(options["gold_embeddings"])
    plan = load_plan(options["plan"])
    plan_words = set(plan.words())
    dictionary = sorted(
        w for w in test_space.words() if w in gold_space and w not in plan_words
    )
    amap = fit_alignment(test_space, gold_space, dictionary)
    a = _space_as_dict(load_text(options["inferred_a"]))
    b = _space_as_dict(load_text(options["inferred_b"]))
    print(format_comparison_table(compare_models(a, b, gold_space, amap, plan)), end="")
    return 0


# (option name, type, default); None defaults mean "required" or "absent"
_COMMON = {"config": (str, None)}
_SPECS = {
    "downsample": {
        **_COMMON,
        "corpus": (str, None),
        "out_dir": (str, None),
        "seed": (int, 0),
        "words_per_bucket": (int, 125),
        "min_occurrences": (int, 1000),
    },
    "train": {
        **_COMMON,
        "corpus": (str, None),
        "embeddings": (str, None),
        "out": (str, None),
        "epochs": (int, 5),
        "seed": (int, 0),
        "contexts_min": (int, 1),
        "contexts_max": (int, 64),
        "min_frequency": (int, 100),
        "no_attention": (bool, False),
        "include_targets": (str, None),
        "lr": (float, 0.01),
        "batch_size": (int, 64),
        "log": (str, None),
    },
    "infer": {
        **_COMMON,
        "checkpoint": (str, None),
        "embeddings": (str, None),
        "word": (str, None),
        "contexts_file": (str, None),
        "mode": (str, "full"),
        "trace": (str, None),
    },
    "eval-vecmap": {
        **_COMMON,
        "test_embeddings": (str, None),
        "gold_embeddings": (str, None),
        "plan": (str, None),
        "inferred": (list, None),
        "out": (str, None),
    },
    "eval-sim": {
        **_COMMON,
        "checkpoint": (str, None),
        "embeddings": (str, None),
        "benchmark": (str, None),
        "contexts": (str, None),
        "mode": (str, "context-only"),
    },
    "probe": {
        **_COMMON,
        "train_set": (str, None),
        "test_set": (str, None),
        "embeddings": (str, None),
        "test_embeddings": (str, None),
        "freq_corpus": (str, None),
        "bins": (str, None),
        "seed": (int, 0),
    },
    "compare": {
        **_COMMON,
        "inferred_a": (str, None),
        "inferred_b": (str, None),
        "test_embeddings": (str, None),
        "gold_embeddings": (str, None),
        "plan": (str, None),
    },
}
_HANDLERS = {
    "downsample": cmd_downsample,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval-vecmap": cmd_eval_vecmap,
    "eval-sim": cmd_eval_sim,
    "probe": cmd_probe,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimicvec",
        description="Rare-word embedding inference and its benchmark harness",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, spec in _SPECS.items():
        p = sub.add_parser(command)
        for key, (typ, _) in spec.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_const", const=True, default=None)
            elif typ is list:
                p.add_argument(flag, action="append", default=None)
            else:
                p.add_argument(flag, type=typ, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        options = _merge_options(args, _SPECS[args.command])
        return _HANDLERS[args.command](options)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # single-line, machine-parseable failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
