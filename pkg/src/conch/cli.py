"""Command-line interface: prepare, train, eval, pathsim, synth."""

from __future__ import annotations

import argparse
import logging
import sys

from .hin import HinFormatError
from .pipeline import PipelineError, RunConfig, evaluate, pathsim_query, prepare, train
from .synth import gen_synthetic


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conch",
        description="Meta-path context graph convolution for node classification in HINs",
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p_prepare = sub.add_parser("prepare", help="build or refresh cached preprocessing artifacts")
    p_prepare.add_argument("--config", required=True, help="run configuration JSON")

    p_train = sub.add_parser("train", help="train a model with early stopping")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None, help="override training.seed")
    p_train.add_argument("--lambda", dest="ss_weight", type=float, default=None,
                         help="override the self-supervision weight")
    p_train.add_argument("--k", type=int, default=None, help="override the neighbor count")
    p_train.add_argument("--random-neighbors", action="store_true",
                         help="ablation: sample neighbors uniformly instead of top-k")
    p_train.add_argument("--supervised-only", action="store_true",
                         help="ablation: train without the self-supervised term")
    p_train.add_argument("--output-dir", default=None, help="override output_dir")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", default="test", choices=["train", "val", "test"])

    p_sim = sub.add_parser("pathsim", help="print one node's ranked neighbor list")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--metapath", required=True)
    p_sim.add_argument("--node", required=True)

    p_synth = sub.add_parser("synth", help="generate a planted-partition synthetic dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--classes", type=int, default=4)
    p_synth.add_argument("--per-class", type=int, default=50)
    p_synth.add_argument("--context-types", type=int, default=2)
    p_synth.add_argument("--noise", type=float, default=0.05,
                         help="inter-class connection probability on the informative meta-path")
    p_synth.add_argument("--p-intra", type=float, default=0.3,
                         help="intra-class connection probability on the informative meta-path")
    p_synth.add_argument("--train-frac", type=float, default=0.1)
    p_synth.add_argument("--val-frac", type=float, default=0.1)
    p_synth.add_argument("--seed", type=int, default=0)
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "ss_weight", None) is not None:
        config.ss_weight = args.ss_weight
    if getattr(args, "k", None) is not None:
        config.k = args.k
    if getattr(args, "random_neighbors", False):
        config.random_neighbors = True
    if getattr(args, "supervised_only", False):
        config.supervised_only = True
    if getattr(args, "output_dir", None) is not None:
        config.output_dir = args.output_dir
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "prepare":
            prepared = prepare(_load_config(args))
            print(f"prepared {len(prepared.graphs)} meta-path(s); "
                  f"{prepared.hin.n_target} target nodes")
            for name, graph in prepared.graphs.items():
                print(f"  {name}: {graph.n_contexts} contexts")
        elif args.command == "train":
            report, checkpoint = train(_load_config(args))
            print(f"checkpoint: {checkpoint}")
            print(f"epochs run: {report.epochs_run} (best epoch {report.best_epoch}, "
                  f"val accuracy {report.best_val_accuracy:.4f})")
            print(f"test micro-F1: {report.micro_f1:.4f}")
            print(f"test macro-F1: {report.macro_f1:.4f}")
            for name, weight in report.attention_mean.items():
                print(f"attention[{name}]: {weight:.4f}")
        elif args.command == "eval":
            report = evaluate(_load_config(args), args.checkpoint, split_name=args.split)
            print(f"{args.split} micro-F1: {report.micro_f1:.4f}")
            print(f"{args.split} macro-F1: {report.macro_f1:.4f}")
        elif args.command == "pathsim":
            rows = pathsim_query(_load_config(args), args.metapath, args.node)
            if not rows:
                print(f"{args.node}: no neighbors under {args.metapath}")
            for nid, score, count in rows:
                print(f"{nid}\t{score:.6f}\t{count}")
        elif args.command == "synth":
            paths = gen_synthetic(
                args.out,
                classes=args.classes,
                per_class=args.per_class,
                context_types=args.context_types,
                noise=args.noise,
                p_intra=args.p_intra,
                seed=args.seed,
                train_frac=args.train_frac,
                val_frac=args.val_frac,
            )
            for kind, path in paths.items():
                print(f"{kind}: {path}")
    except (PipelineError, HinFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
