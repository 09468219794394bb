"""Command-line interface.

Subcommands: featurize, generate, train, predict, eval, bench.  Exit codes:
0 success, 1 usage error, 2 data error, 3 numeric failure (non-finite
parameters after training).  Every command is deterministic under --seed.
The SSFGM_LOG environment variable sets the log level (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .deepnet import SgdConfig, embed_all, train_wide_deep
from .errors import NetlabelError
from .evaluation import SyntheticSpec, evaluate, generate_synthetic
from .features import featurize, read_raw_records, write_node_file
from .learning import (
    LearnerConfig,
    default_predict_method,
    predict,
    save_history_csv,
    train,
)
from .network import (
    LoadOptions,
    load_network,
    filter_rare_categories,
    partition_ids,
    save_network,
    split_labels,
)
from .validation import parse_fractions

log = logging.getLogger("netlabel")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="netlabel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    feat = sub.add_parser("featurize", help="raw JSONL records to a node file")
    feat.add_argument("--raw", required=True)
    feat.add_argument("--out", required=True)
    feat.add_argument("--split", default="0.5,0.1,0.4")
    feat.add_argument("--seed", type=int, default=0)
    feat.add_argument("--min-docs", type=int, default=10)
    feat.add_argument("--min-occurrence", type=int, default=5)

    gen = sub.add_parser("generate", help="synthetic homophily network")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--c", type=int, required=True)
    gen.add_argument("--p-same", type=float, default=0.95)
    gen.add_argument("--mean-degree", type=float, default=8.0)
    gen.add_argument("--feature-signal", type=float, default=1.0)
    gen.add_argument("--labeled-frac", type=float, default=0.5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out-nodes", required=True)
    gen.add_argument("--out-edges", required=True)

    def add_common_train_flags(p):
        p.add_argument("--nodes", required=True)
        p.add_argument("--edges", required=True)
        p.add_argument("--split", default="0.5,0.1,0.4")
        p.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="train a model and write a checkpoint")
    add_common_train_flags(tr)
    tr.add_argument("--learner", choices=["lbp", "sr", "mh", "mh+"], default="mh+")
    tr.add_argument("--eta", type=float, default=None, help="learning rate")
    tr.add_argument("--batch-size", type=int, default=5000)
    tr.add_argument("--delta", type=int, default=1000,
                    help="iterations between validation evaluations")
    tr.add_argument("--epsilon", type=int, default=20,
                    help="non-improving evaluations before stopping")
    tr.add_argument("--max-iter", type=int, default=10_000)
    tr.add_argument("--bp-sweeps", type=int, default=50)
    tr.add_argument("--bp-iterations", type=int, default=100)
    tr.add_argument("--l2", type=float, default=0.0)
    tr.add_argument("--workers", type=int, default=1)
    tr.add_argument("--deep", action="store_true", default=False)
    tr.add_argument("--no-deep", dest="deep", action="store_false")
    tr.add_argument("--min-category-count", type=int, default=1)
    tr.add_argument("--out", required=True)
    tr.add_argument("--history", default=None)

    pr = sub.add_parser("predict", help="label every node with a trained model")
    pr.add_argument("--nodes", required=True)
    pr.add_argument("--edges", required=True)
    pr.add_argument("--model", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--split", default=None,
                    help="clamp only train+validation of this split")
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--steps", type=int, default=None)

    ev = sub.add_parser("eval", help="score a prediction file against labels")
    ev.add_argument("--nodes", required=True)
    ev.add_argument("--pred", required=True)
    ev.add_argument("--split", default=None,
                    help="evaluate only the test partition of this split")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--json", action="store_true")

    be = sub.add_parser("bench", help="time learners at fixed seeds")
    add_common_train_flags(be)
    be.add_argument("--learners", default="sr,mh,mh+")
    be.add_argument("--eta", type=float, default=None)
    be.add_argument("--batch-size", type=int, default=5000)
    be.add_argument("--delta", type=int, default=1000)
    be.add_argument("--epsilon", type=int, default=20)
    be.add_argument("--max-iter", type=int, default=100)
    be.add_argument("--bp-sweeps", type=int, default=50)
    be.add_argument("--bp-iterations", type=int, default=30)
    be.add_argument("--workers", type=int, default=1)
    return parser


def _read_label_file(path) -> tuple[list[str], dict[str, str]]:
    """Node ids in file order plus id -> label-name map (labeled rows only)."""
    ids, labels = [], {}
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:2] != ["id", "label"]:
            raise NetlabelError(f"{path}: not a node file")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            ids.append(parts[0])
            if len(parts) > 1 and parts[1]:
                labels[parts[0]] = parts[1]
    return ids, labels


def _cmd_featurize(args) -> int:
    records = read_raw_records(args.raw)
    dataset = featurize(
        records,
        fractions=parse_fractions(args.split),
        seed=args.seed,
        min_docs=args.min_docs,
        min_occurrence=args.min_occurrence,
    )
    write_node_file(dataset, args.out)
    log.info("featurized %d users, width %d", len(dataset.node_ids),
             dataset.features.shape[1])
    return EXIT_OK


def _cmd_generate(args) -> int:
    spec = SyntheticSpec(
        num_nodes=args.n,
        num_categories=args.c,
        p_same=args.p_same,
        mean_degree=args.mean_degree,
        feature_signal=args.feature_signal,
        labeled_fraction=args.labeled_frac,
        seed=args.seed,
    )
    net = generate_synthetic(spec)
    save_network(net, args.out_nodes, args.out_edges)
    log.info("generated %d nodes, %d edges", net.num_nodes, len(net.edges))
    return EXIT_OK


def _learner_config(args) -> LearnerConfig:
    return LearnerConfig(
        learner=args.learner,
        learning_rate=args.eta,
        batch_size=args.batch_size,
        eval_every=args.delta,
        patience=args.epsilon,
        max_iterations=args.max_iter,
        bp_sweeps=args.bp_sweeps,
        bp_iterations=args.bp_iterations,
        seed=args.seed,
        workers=args.workers,
        l2=args.l2 if hasattr(args, "l2") else 0.0,
    )


def _cmd_train(args) -> int:
    net = load_network(args.nodes, args.edges)
    if args.min_category_count > 1:
        net = filter_rare_categories(net, args.min_category_count)
    split = split_labels(net, parse_fractions(args.split), args.seed)
    config = _learner_config(args)

    deep = None
    embeddings = None
    init_attr = init_deep = None
    if args.deep:
        deep = train_wide_deep(net, split, SgdConfig(seed=args.seed))
        embeddings = embed_all(deep, net)
        init_attr, init_deep = deep.head_wide, deep.head_deep

    run = train(net, split, config, embeddings, init_attr=init_attr,
                init_deep=init_deep)
    if not run.best_params.all_finite():
        log.error("training produced non-finite parameters")
        return EXIT_NUMERIC
    meta = {
        "learner": config.learner,
        "seed": config.seed,
        "split": args.split,
        "deep": bool(args.deep),
        "best_validation_accuracy": run.best_validation_accuracy,
        "stop_reason": run.stop_reason.value,
    }
    save_checkpoint(
        args.out,
        Checkpoint(
            params=run.best_params,
            categories={name: k for k, name in enumerate(net.category_names)},
            deep=deep,
            meta=meta,
        ),
    )
    if args.history:
        save_history_csv(run, args.history)
    log.info("stopped: %s, best validation accuracy %.4f",
             run.stop_reason.value, run.best_validation_accuracy)
    return EXIT_OK


def _cmd_predict(args) -> int:
    checkpoint = load_checkpoint(args.model)
    net = load_network(
        args.nodes, args.edges, LoadOptions(categories=checkpoint.categories)
    )
    embeddings = (
        embed_all(checkpoint.deep, net) if checkpoint.deep is not None else None
    )
    if args.split is not None:
        split = split_labels(net, parse_fractions(args.split), args.seed)
        clamp = {
            i: net.labels[i] for i in (split.train | split.validation)
        }
    else:
        clamp = dict(net.labels)
    method = default_predict_method(checkpoint.meta.get("learner", "mh+"))
    config = predict(
        net, checkpoint.params, embeddings,
        method=method, steps=args.steps, clamp=clamp, seed=args.seed,
    )
    with Path(args.out).open("w", encoding="utf-8", newline="\n") as fh:
        for node_id, cat in zip(net.node_ids, config.tolist()):
            fh.write(f"{node_id}\t{net.category_names[cat]}\n")
    return EXIT_OK


def _cmd_eval(args) -> int:
    ids, truth_names = _read_label_file(args.nodes)
    predictions: dict[str, str] = {}
    with Path(args.pred).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            node_id, _, name = line.partition("\t")
            predictions[node_id] = name

    if args.split is not None:
        labeled_positions = [k for k, i in enumerate(ids) if i in truth_names]
        _, _, test_positions = partition_ids(
            labeled_positions, parse_fractions(args.split), args.seed
        )
        eval_ids = [ids[k] for k in sorted(test_positions)]
    else:
        eval_ids = [i for i in ids if i in truth_names and i in predictions]
    if not eval_ids:
        raise NetlabelError("no overlapping labeled and predicted nodes to score")

    names = sorted({truth_names[i] for i in eval_ids} | set(predictions.values()))
    index = {name: k for k, name in enumerate(names)}
    truth = {k: index[truth_names[i]] for k, i in enumerate(eval_ids)}
    predicted = [index.get(predictions.get(i, ""), 0) for i in eval_ids]
    report = evaluate(truth, predicted, num_categories=len(names))
    if args.json:
        print(report.to_json())
    else:
        print(report.format_table(names))
    return EXIT_OK


def _cmd_bench(args) -> int:
    net = load_network(args.nodes, args.edges)
    split = split_labels(net, parse_fractions(args.split), args.seed)
    rows = []
    for learner in [p for p in args.learners.split(",") if p]:
        base = LearnerConfig(
            learner=learner,
            learning_rate=args.eta,
            batch_size=args.batch_size,
            eval_every=args.delta,
            patience=args.epsilon,
            max_iterations=args.max_iter,
            bp_sweeps=args.bp_sweeps,
            bp_iterations=args.bp_iterations,
            seed=args.seed,
            workers=1,
        )
        run = train(net, split, base)
        rows.append((learner, 1, run.seconds, run.best_validation_accuracy, 1.0))
        if learner == "mh+" and args.workers > 1:
            parallel = dataclasses.replace(base, workers=args.workers)
            prun = train(net, split, parallel)
            rows.append(
                (learner, args.workers, prun.seconds,
                 prun.best_validation_accuracy, run.seconds / prun.seconds)
            )
    print(f"{'learner':>8} {'workers':>7} {'seconds':>9} {'val_acc':>8} {'speedup':>8}")
    for learner, workers, seconds, acc, speedup in rows:
        print(f"{learner:>8} {workers:>7d} {seconds:>9.2f} {acc:>8.4f} {speedup:>8.2f}")
    return EXIT_OK


_COMMANDS = {
    "featurize": _cmd_featurize,
    "generate": _cmd_generate,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("SSFGM_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, _UsageError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NetlabelError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except OSError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
