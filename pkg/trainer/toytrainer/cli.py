"""`toytrainer train|eval` command-line entry points."""

from __future__ import annotations

import argparse
import json
import sys

from .data import load_dataset
from .evaluate import evaluate
from .model import ToyModelConfig
from .train import load_checkpoint, train


def cmd_train(args) -> int:
    with open(args.config, encoding="utf-8") as f:
        cfg = json.load(f)
    dataset = load_dataset(cfg["dataset"])
    model_config = ToyModelConfig(
        vocab_size=dataset.spec.vocab_size,
        max_seq_len=dataset.spec.seq_len,
        layers=cfg.get("layers", 2),
        heads=cfg.get("heads", 4),
        hidden=cfg.get("hidden", 128),
        seed=cfg.get("seed", 0),
        positions=cfg.get("positions", "learned"),
    )
    train(
        dataset,
        model_config,
        steps=cfg["steps"],
        batch_size=cfg.get("batch_size", 64),
        lr=cfg.get("lr", 5e-5),
        checkpoint_dir=cfg["checkpoint_dir"],
        checkpoint_every=cfg.get("checkpoint_every", 500),
        seed=cfg.get("seed", 0),
        resume_from=cfg.get("resume_from"),
        warmup_steps=cfg.get("warmup_steps", 0),
        lr_min=cfg.get("lr_min"),
    )
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    evaluate(model, dataset, args.out,
             export_attention=not args.no_attention)
    print(json.dumps({"out": args.out, "n_sequences": dataset.spec.n_records}))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="toytrainer")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a JSON config")
    t.add_argument("--config", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy-decode an eval dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--no-attention", action="store_true")
    e.set_defaults(func=cmd_eval)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
