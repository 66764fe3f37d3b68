"""Command-line entry points: ``stabnet train`` and ``stabnet infer``."""

from __future__ import annotations

import argparse
import sys

from .formats import read_training_batch
from .infer import run_inference
from .model import ModelConfig
from .train import TrainConfig, save_checkpoint, train


def _cmd_train(args) -> int:
    batch = read_training_batch(args.batch)
    config = TrainConfig(
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        val_fraction=args.val_fraction,
        alpha=args.alpha,
        seed=args.seed,
        device=args.device,
    )
    model_config = ModelConfig(dropout=args.dropout)
    log = None if args.quiet else print
    result = train(batch, model_config=model_config, config=config, log=log)
    save_checkpoint(args.out, result.model, train_config=config, history=result.history)
    final = result.history[-1]
    line = f"trained {len(result.train_indices)} submaps, final train loss {final.train_loss:.6f}"
    if final.val_loss is not None:
        line += f", val loss {final.val_loss:.6f}"
    print(line)
    print(f"saved {args.out}")
    return 0


def _cmd_infer(args) -> int:
    n = run_inference(
        args.checkpoint, args.batch, args.out, batch_size=args.batch_size, device=args.device
    )
    print(f"wrote predictions for {n} submaps to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stabnet",
        description="Train and run the point-wise stability regression network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model to a batch file of labelled submaps")
    p.add_argument("batch")
    p.add_argument("--out", required=True)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=None,
                   help="density weighting strength; must match the batch header (default: adopt it)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--device", default="cpu")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="predict stability for every submap in a batch file")
    p.add_argument("checkpoint")
    p.add_argument("batch")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=_cmd_infer)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
