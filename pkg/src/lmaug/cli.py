"""Command-line entry point.

Each pipeline stage is a subcommand; `run` executes the whole pipeline,
skipping stages whose artifacts are already current.  All subcommands
share --config, --force, and --seed.
"""

import argparse
import sys

from .pipeline import STAGES, Pipeline, load_config

_STAGE_HELP = {
    "bpe-learn": "learn the subword tokenizer from the general and in-domain training text",
    "pretrain": "train the decoder LM on the general corpus",
    "finetune": "continue training on the in-domain corpus",
    "prefixes": "extract sentence-opening prefixes from the in-domain corpus",
    "generate": "sample synthetic sentences conditioned on the prefixes",
    "filter": "apply rule-based cleanup to the synthetic sentences",
    "ngram-train": "estimate the synthetic and baseline n-gram models",
    "interpolate": "fit mixture weights on dev data and flatten to one model",
    "eval": "score every model on the test set and write the report",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lmaug",
        description="data augmentation for small-domain language models",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML pipeline configuration")
    common.add_argument(
        "--force", action="store_true", help="rerun even when artifacts are current"
    )
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=_STAGE_HELP[name])
    run = sub.add_parser("run", parents=[common], help="run every stage in order")
    run.add_argument(
        "--stage",
        choices=STAGES,
        default=None,
        help="run only this stage instead of the full pipeline",
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    pipe = Pipeline(config, force=args.force)
    if args.command == "run":
        pipe.run(stage=args.stage)
    else:
        pipe.run_stage(args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
