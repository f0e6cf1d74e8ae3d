"""Command-line entry point: the full pipeline as subcommands.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
error.  All artifacts are written atomically (temp file + rename), so a
crash never leaves a partial file behind.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import NumericError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint, serialize
from .config import load_config, load_preset, preset_names, resolved_config_text
from .entity_encoder import propagate, score_candidates
from .evaluation import evaluate, perturbed_evaluate
from .kg import ParseError, ResolutionError, load_splits
from .preprocess import (PreprocessError, PrunePartitionConfig, canonicalize,
                         prune_partition, validate_inductive_split)
from .rdg import (build_ingram_graph, build_rdg, build_ultra_metagraph,
                  dump_rdg, rdg_stats)
from .relation_encoder import encode_relations
from .training import (ConfigError, LogRow, TrainConfig, finetune,
                       pretrain_sequence, train)


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def atomic_write(path, data):
    """Write bytes or text via a temp file in the target directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_lines(path) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.readlines()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc


def _read_str_triples(path):
    triples = []
    for line_no, raw in enumerate(_read_lines(path), start=1):
        line = raw.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError("expected 3 tab-separated fields", line_no)
        triples.append(tuple(fields))
    return triples


def _load_splits_from_args(args, require_test=False):
    valid = _read_lines(args.valid) if getattr(args, "valid", None) else ()
    test = _read_lines(args.test) if getattr(args, "test", None) else ()
    if require_test and not test:
        raise UsageError("--test is required")
    return load_splits(_read_lines(args.train), valid, test)


def _resolve_config(args) -> tuple[TrainConfig, dict]:
    if getattr(args, "config", None) and getattr(args, "preset", None):
        raise UsageError("--config and --preset are mutually exclusive")
    if getattr(args, "preset", None):
        config, data = load_preset(args.preset)
    elif getattr(args, "config", None):
        config, data = load_config(args.config)
    else:
        config, data = TrainConfig(), {}
    for override in getattr(args, "set", None) or []:
        if "=" not in override:
            raise UsageError(f"--set expects key=value, got {override!r}")
        key, value = override.split("=", 1)
        key = key.strip()
        if not hasattr(config, key):
            raise UsageError(f"unknown config key {key!r}")
        current = getattr(config, key)
        caster = type(current) if not isinstance(current, str) else str
        try:
            setattr(config, key, caster(value))
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {value!r}") from exc
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    config.validate()
    for key in ("train", "valid", "test"):
        path = getattr(args, key, None)
        if path:
            data[key] = path
    return config, data


def _print_config(config: TrainConfig, data: dict):
    print("# resolved configuration")
    print(resolved_config_text(config, data), end="")


def _splits_from_data(data: dict):
    if "train" not in data:
        raise UsageError("no training data given (--train or [data] train)")
    valid = _read_lines(data["valid"]) if data.get("valid") else ()
    test = _read_lines(data["test"]) if data.get("test") else ()
    return load_splits(_read_lines(data["train"]), valid, test)


def _log_path_sink(path):
    if path is None:
        return None, lambda _rows=None: None
    lines = [LogRow.header()]

    def sink(row):
        lines.append(row.csv())

    def flush(_rows=None):
        atomic_write(path, "\n".join(lines) + "\n")

    return sink, flush


# -- subcommands -------------------------------------------------------

def cmd_build_rdg(args):
    splits = _load_splits_from_args(args)
    rdg = build_rdg(splits.train)
    edges, tau = dump_rdg(rdg)
    out = Path(args.out)
    atomic_write(out / "rdg_edges.tsv", edges)
    atomic_write(out / "rdg_tau.tsv", tau)
    stats = rdg_stats(rdg)
    print(f"relations={stats.relation_count} retained_edges={stats.edge_count}")
    return 0


def cmd_stats(args):
    splits = _load_splits_from_args(args)
    kg = splits.train
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    rows = ["dataset,method,relations,edges"]
    for method in methods:
        if method == "rdg":
            stats = rdg_stats(build_rdg(kg))
        elif method == "ingram":
            stats = build_ingram_graph(kg)
        elif method == "ultra":
            stats = build_ultra_metagraph(kg)
            rows[0] = "dataset,method,relations,edges,h2h,h2t,t2h,t2t"
        else:
            raise UsageError(f"unknown method {method!r} (rdg, ingram, ultra)")
        rows.append(stats.csv_row(args.dataset))
    csv = "\n".join(rows) + "\n"
    if args.out:
        atomic_write(args.out, csv)
    print(csv, end="")
    return 0


def cmd_train(args):
    config, data = _resolve_config(args)
    _print_config(config, data)
    splits = _splits_from_data(data)
    sink, flush = _log_path_sink(args.log)
    ckpt, log = train(splits, config, log_sink=sink)
    flush()
    atomic_write(args.out, serialize(ckpt))
    best = ckpt.best_val_mrr
    print(f"best_epoch={ckpt.epoch} best_val_mrr="
          f"{'nan' if best is None else f'{best:.6f}'} checkpoint={args.out}")
    return 0


def cmd_pretrain(args):
    config, _ = _resolve_config(args)
    _print_config(config, {})
    stages = []
    for directory in args.dataset:
        d = Path(directory)
        train_file = d / "train.txt"
        if not train_file.is_file():
            raise ParseError(f"no train.txt in dataset directory {d}")
        valid_file = d / "valid.txt"
        splits = load_splits(_read_lines(train_file),
                             _read_lines(valid_file) if valid_file.is_file() else ())
        stages.append((splits, config))
    sink, flush = _log_path_sink(args.log)
    ckpt, _logs = pretrain_sequence(stages, log_sink=sink)
    flush()
    atomic_write(args.out, serialize(ckpt))
    print(f"stages={len(stages)} checkpoint={args.out}")
    return 0


def cmd_finetune(args):
    config, data = _resolve_config(args)
    ckpt = load_checkpoint(args.checkpoint)
    splits = _splits_from_data(data)
    sink, flush = _log_path_sink(args.log)
    tuned, log = finetune(ckpt, splits, config, log_sink=sink)
    flush()
    atomic_write(args.out, serialize(tuned))
    best = tuned.best_val_mrr
    print(f"best_epoch={tuned.epoch} best_val_mrr="
          f"{'nan' if best is None else f'{best:.6f}'} checkpoint={args.out}")
    return 0


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    params = ckpt.to_params()
    splits = _load_splits_from_args(args, require_test=True)
    report = evaluate(params, splits)
    if args.out:
        atomic_write(args.out, report.csv())
    print(report.table(), end="")
    return 0


def cmd_perturb(args):
    ckpt = load_checkpoint(args.checkpoint)
    params = ckpt.to_params()
    splits = _load_splits_from_args(args, require_test=True)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    report = perturbed_evaluate(params, splits, args.mode, args.k, rng)
    if report.degenerate:
        print("warning: k removes every retained edge", file=sys.stderr)
    print(f"mode={args.mode} k={args.k}")
    print(report.table(), end="")
    return 0


def cmd_predict(args):
    ckpt = load_checkpoint(args.checkpoint)
    params = ckpt.to_params()
    splits = load_splits(_read_lines(args.context))
    kg = splits.train
    rdg = build_rdg(kg)
    queries = []
    for line_no, raw in enumerate(_read_lines(args.queries), start=1):
        line = raw.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 2:
            raise ParseError("expected head\\trelation", line_no)
        queries.append((fields[0], fields[1]))
    lines = []
    rq_cache: dict[int, object] = {}
    for head, rel in queries:
        e_q = splits.vocab.entity_id(head, frozen=True)
        r_q = splits.vocab.relation_id(rel, frozen=True)
        if r_q not in rq_cache:
            rq_cache[r_q] = encode_relations(rdg, r_q, params.relation)
        ctx = propagate(kg, rdg, params.relation, params.entity, e_q, r_q,
                        rq_embeddings=rq_cache[r_q])
        ranked = score_candidates(ctx, params.entity)[:args.top_k]
        for entity, score in ranked:
            lines.append(f"{head}\t{rel}\t{splits.vocab.entity_names[entity]}"
                         f"\t{score:.6f}")
    output = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        atomic_write(args.out, output)
    print(output, end="")
    return 0


def cmd_preprocess(args):
    out = Path(args.out)
    if args.action == "canonicalize":
        relations = [l.strip() for l in _read_lines(args.relations) if l.strip()]
        result = canonicalize(relations, _read_lines(args.train_interactions),
                              _read_str_triples(args.kg),
                              _read_lines(args.test_interactions)
                              if args.test_interactions else [])
        atomic_write(out / "relations.tsv",
                     "".join(f"{r}\t{i}\n" for i, r in enumerate(result.relations)))
        atomic_write(out / "triples.tsv",
                     "".join(f"{h}\t{r}\t{t}\n" for h, r, t in result.triples))
        atomic_write(out / "entity_ids.tsv",
                     "".join(f"{e}\t{i}\n" for e, i in result.entity_ids.items()))
        meta = {"interaction_relation": result.interaction_relation,
                "interaction_relation_id": result.interaction_relation_id,
                "triples": len(result.triples),
                "entities": len(result.entity_ids),
                "skipped_lines": result.skipped_lines}
        atomic_write(out / "metadata.jsonl", json.dumps(meta) + "\n")
        print(json.dumps(meta))
        return 0
    if args.action == "prune-partition":
        alpha = tuple(float(a) for a in args.alpha.split(","))
        config = PrunePartitionConfig(rho=args.rho, theta=args.theta,
                                      alpha=alpha, weight=args.weight,
                                      seed=args.seed)
        result = prune_partition(_read_str_triples(args.kg), config)
        for name, rows in (("train", result.train), ("valid", result.valid),
                           ("test", result.test)):
            atomic_write(out / f"{name}.txt",
                         "".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows))
        atomic_write(out / "seen_entities.tsv",
                     "".join(f"{e}\n" for e in sorted(result.seen_entities)))
        atomic_write(out / "seen_relations.tsv",
                     "".join(f"{r}\n" for r in sorted(result.seen_relations)))
        atomic_write(out / "metadata.jsonl", json.dumps(result.metadata) + "\n")
        print(json.dumps(result.metadata))
        return 0
    if args.action == "validate":
        report = validate_inductive_split(_read_str_triples(args.train),
                                          _read_str_triples(args.valid)
                                          if args.valid else [],
                                          _read_str_triples(args.test))
        print(report.table(), end="")
        return 0
    raise UsageError(f"unknown preprocess action {args.action!r}")


# -- argument parsing --------------------------------------------------

def _add_config_flags(p, with_data=True):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--preset",
                   help="named preset (see `--help` footer for the list)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a single config key")
    p.add_argument("--seed", type=int, help="master random seed")
    if with_data:
        p.add_argument("--train", help="training triples TSV")
        p.add_argument("--valid", help="validation triples TSV")
        p.add_argument("--test", help="test triples TSV")


def build_parser() -> _Parser:
    parser = _Parser(prog="relgraph",
                     description="Knowledge-graph link prediction with "
                                 "query-conditioned relation embeddings.",
                     epilog="presets: " + ", ".join(preset_names()))
    parser.add_argument("--version", action="version",
                        version=f"relgraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-rdg", help="write the relation-dependency graph")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_rdg)

    p = sub.add_parser("stats", help="relation meta-graph size comparison")
    p.add_argument("--train", required=True)
    p.add_argument("--methods", default="rdg,ingram,ultra")
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train from scratch")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", help="CSV training log path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain", help="sequential multi-graph pre-training")
    _add_config_flags(p, with_data=False)
    p.add_argument("--dataset", action="append", required=True,
                   help="dataset directory with train.txt [valid.txt]; repeatable")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="adapt a checkpoint, final layer only")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="filtered-ranking metrics on a test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train", required=True, help="context graph triples")
    p.add_argument("--valid")
    p.add_argument("--test", required=True)
    p.add_argument("--out", help="CSV report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("perturb", help="evaluate with RDG edges removed")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--test", required=True)
    p.add_argument("--mode", choices=("top", "bottom", "random"), required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("predict", help="rank tail entities for queries")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--context", required=True, help="fact graph triples TSV")
    p.add_argument("--queries", required=True, help="TSV of head\\trelation")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("preprocess", help="dataset preparation tools")
    p.add_argument("action",
                   choices=("canonicalize", "prune-partition", "validate"))
    p.add_argument("--relations", help="relation list, one per line")
    p.add_argument("--train-interactions")
    p.add_argument("--test-interactions")
    p.add_argument("--kg", help="triples TSV")
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--rho", type=float, default=0.075)
    p.add_argument("--theta", type=float, default=0.7)
    p.add_argument("--alpha", default="0.8,0.1,0.1")
    p.add_argument("--weight", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_preprocess)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, ResolutionError, CheckpointError, PreprocessError,
            FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
