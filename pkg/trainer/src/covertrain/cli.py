"""Command line entry points: ``covertrain train`` and ``covertrain evaluate``."""

from __future__ import annotations

import argparse
import logging
import sys

from .train import TrainConfig, evaluate, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="covertrain",
        description="Imitation-train or evaluate a coverage policy bundle.")
    sub = parser.add_subparsers(dest="command", required=True)
    train_p = sub.add_parser("train", help="train from a config file")
    train_p.add_argument("--config", required=True,
                         help="key=value training config file")
    eval_p = sub.add_parser("evaluate", help="MSE of a bundle on a dataset")
    eval_p.add_argument("--bundle", required=True)
    eval_p.add_argument("--dataset", required=True)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "train":
            config = TrainConfig.from_file(args.config)
            best_val, final_train = train(config)
            print(f"best validation MSE {best_val!r}, "
                  f"final training MSE {final_train!r}")
            print(f"wrote {config.output}")
        else:
            mse = evaluate(args.bundle, args.dataset)
            print(f"MSE {mse!r}")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
