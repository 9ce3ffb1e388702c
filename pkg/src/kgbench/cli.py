"""Single command-line entry point: build, validate, train, eval, presets.

Exit codes: 0 on success, 1 on contract errors or validation violations,
2 on usage errors. Diagnostics go to stderr; data and reports go to files
or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import io, ontology, sampling, training
from .core import OntologySchema, VocabPolicy, coverage_report, dataset_stats, encode_triples
from .errors import KgBenchError
from .evaluation import EvalConfig, Protocol, Sides, evaluate
from .models import MODEL_TAGS

DEFAULT_SEED = 0


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="sample a benchmark from a full triple file")
    p_build.add_argument("--full", required=True, help="full KG as head<TAB>rel<TAB>tail TSV")
    p_build.add_argument("--config", required=True, help="sampler config JSON")
    p_build.add_argument("--out", required=True, help="output directory")
    p_build.add_argument("--seed", type=int, default=None, help="override config seed")

    p_val = sub.add_parser("validate", help="check a dataset against an ontology schema")
    p_val.add_argument("--schema", required=True, help="schema JSON")
    p_val.add_argument("--data", required=True, help="dataset directory")
    p_val.add_argument("--out", default=None, help="write the validation report JSON here")

    p_train = sub.add_parser("train", help="train one model on a dataset directory")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--model", required=True, choices=MODEL_TAGS)
    p_train.add_argument("--preset", default=None, help="dataset tag with published settings")
    p_train.add_argument("--config", default=None, help="train config JSON (overrides preset)")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--loss-csv", default=None, help="write epoch,loss CSV here (default stdout)")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.add_argument("--workers", type=int, default=1,
                         help="training is single-writer; only 1 is supported")

    p_eval = sub.add_parser("eval", help="filtered/raw link-prediction evaluation")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--protocol", choices=["raw", "filtered"], default="filtered")
    p_eval.add_argument("--sides", choices=["tail", "both"], default="both")
    p_eval.add_argument("--relation", default=None, help="restrict to one relation label")
    p_eval.add_argument("--transe-norm", type=int, choices=[1, 2], default=2)
    p_eval.add_argument("--workers", type=int, default=None,
                        help="parallel ranking workers (default KGBENCH_WORKERS or 1)")
    p_eval.add_argument("--out", default=None, help="write the report JSON here")

    sub.add_parser("presets", help="list all published hyperparameter presets")
    return parser


def _cmd_build(args) -> int:
    raw = io.read_triples_tsv(args.full)
    vocab, full = encode_triples(raw, VocabPolicy.GROW)
    cfg_dict = io.read_json(args.config)
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    cfg_dict.setdefault("seed", DEFAULT_SEED)
    allow = cfg_dict.pop("allowlist", None)
    if allow is not None:
        allow = frozenset(vocab.relation_id(label) for label in allow)
    cfg = sampling.SamplerConfig(allowlist=allow, **cfg_dict)

    dataset, hist, audit = sampling.build_benchmark(full, vocab, cfg)
    out_dir = Path(args.out)
    io.save_dataset(dataset, out_dir)
    with open(out_dir / "relation_histogram.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["relation", "count"])
        for rid, count in hist:
            writer.writerow([dataset.vocab.relation_labels[rid], count])
    io.write_json(audit, out_dir / "audit.json")
    stats = dataset_stats(dataset)
    _log(
        f"built benchmark: {stats[0]} entities, {stats[1]} relations, "
        f"train/dev/test = {stats[2]}/{stats[3]}/{stats[4]}"
    )
    return 0


def _cmd_validate(args) -> int:
    dataset = io.load_dataset(args.data)
    schema_dict = io.read_json(args.schema)
    schema = ontology.schema_from_dict(schema_dict, dataset.vocab)
    extra_edges = ontology.taxonomy_edges_from(dataset, schema)
    if extra_edges:
        schema = OntologySchema(
            schema.node_kinds,
            schema.relations,
            schema.taxonomy_edges + tuple(extra_edges),
            schema.property_edges,
        )
    report = ontology.check_taxonomy(schema).merge(
        ontology.check_domain_range(dataset, schema)
    )
    out = report.to_dict()
    out["coverage"] = coverage_report(dataset)
    if args.out:
        io.write_json(out, args.out)
    else:
        print(json.dumps(out, indent=2, sort_keys=True))
    if not report.conforms:
        _log(f"validation found {len(report.violations)} violations")
        return 1
    _log("validation passed")
    return 0


def _cmd_train(args) -> int:
    if args.workers != 1:
        _log("error: parameter updates are single-writer; --workers must be 1")
        return 2
    dataset = io.load_dataset(args.data)
    if args.preset is None and args.config is None:
        _log("error: provide --preset and/or --config")
        return 2
    cfg_dict = training.preset(args.model, args.preset).to_dict() if args.preset else {}
    if args.config:
        overrides = io.read_json(args.config)
        cfg_dict.update(overrides)
        # num_batches and batch_size are mutually exclusive; an override of
        # one evicts a preset's other.
        if "num_batches" in overrides and "batch_size" not in overrides:
            cfg_dict.pop("batch_size", None)
        if "batch_size" in overrides and "num_batches" not in overrides:
            cfg_dict.pop("num_batches", None)
    cfg_dict["model"] = args.model
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    cfg_dict.setdefault("seed", DEFAULT_SEED)
    cfg = training.TrainConfig.from_dict(cfg_dict)

    params, curve = training.train(dataset, cfg)
    io.write_checkpoint(params, args.out)
    lines = ["epoch,loss"] + [f"{i},{loss!r}" for i, loss in enumerate(curve)]
    if args.loss_csv:
        Path(args.loss_csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        print("\n".join(lines))
    _log(f"wrote checkpoint to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    dataset = io.load_dataset(args.data)
    params = io.read_checkpoint(args.ckpt)
    relation = None
    if args.relation is not None:
        relation = dataset.vocab.relation_id(args.relation)
    cfg = EvalConfig(
        protocol=Protocol(args.protocol),
        sides=Sides(args.sides),
        relation=relation,
        transe_p=args.transe_norm,
    )
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("KGBENCH_WORKERS", "1"))
    report = evaluate(dataset, params, cfg, workers=max(1, workers))
    if args.out:
        io.write_report(report, args.out)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_presets(_args) -> int:
    rows = training.preset_table()
    header = f"{'model':<10} {'dataset':<14} {'batches':>8} {'batch':>6} {'epochs':>7} {'lr':>8} {'opt':>8} {'loss':>9}"
    print(header)
    print("-" * len(header))
    for model, ds, cfg in rows:
        nb = cfg.num_batches if cfg.num_batches is not None else "-"
        bs = cfg.batch_size if cfg.batch_size is not None else "-"
        print(
            f"{model:<10} {ds:<14} {nb:>8} {bs:>6} {cfg.epochs:>7} "
            f"{cfg.learning_rate:>8g} {cfg.optimizer:>8} {cfg.loss:>9}"
        )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    handlers = {
        "build": _cmd_build,
        "validate": _cmd_validate,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "presets": _cmd_presets,
    }
    try:
        return handlers[args.command](args)
    except KgBenchError as exc:
        _log(f"error: {exc}")
        return 1
    except (ValueError, TypeError) as exc:
        _log(f"config error: {exc}")
        return 1
    except OSError as exc:
        _log(f"io error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
