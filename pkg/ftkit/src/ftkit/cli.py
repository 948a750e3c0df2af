"""ftkit command line: export training data, train adapters, emit predictions."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .data import export_dataset, read_examples
from .predict import predict, write_predictions
from .train import TrainConfig, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftkit", description="QA fine-tuning kit.")
    parser.add_argument("--version", action="version", version=f"ftkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_export = sub.add_parser("export", help="export QA training examples from interchange JSONL")
    p_export.add_argument("--corpus", required=True, type=Path)
    p_export.add_argument("--lexicon", required=True, type=Path)
    p_export.add_argument("--dataset", default="fn17")
    p_export.add_argument("--split", default="train")
    p_export.add_argument("--out", required=True, type=Path)

    p_train = sub.add_parser("train", help="train LoRA adapters on exported examples")
    p_train.add_argument("--examples", required=True, type=Path)
    p_train.add_argument("--adapter-dir", required=True, type=Path)
    p_train.add_argument("--epochs", type=int, default=3)
    p_train.add_argument("--learning-rate", type=float, default=2e-5)
    p_train.add_argument("--lora-rank", type=int, default=16)
    p_train.add_argument("--lora-alpha", type=int, default=32)
    p_train.add_argument("--batch-size", type=int, default=1)
    p_train.add_argument("--base-model", default="tiny")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--predictions", type=Path, default=None,
                         help="also write predictions for the training examples")

    p_predict = sub.add_parser("predict", help="emit predictions for examples with a trained adapter")
    p_predict.add_argument("--examples", required=True, type=Path)
    p_predict.add_argument("--adapter-dir", required=True, type=Path)
    p_predict.add_argument("--out", required=True, type=Path)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO)

    try:
        if args.command == "export":
            examples, skipped = export_dataset(
                args.corpus, args.dataset, args.split, args.lexicon, out_path=args.out
            )
            print(f"{len(examples)} examples -> {args.out} (skipped: {skipped})")
            return 0
        if args.command == "train":
            examples = read_examples(args.examples)
            config = TrainConfig(
                lora_rank=args.lora_rank,
                lora_alpha=args.lora_alpha,
                batch_size=args.batch_size,
                epochs=args.epochs,
                learning_rate=args.learning_rate,
                base_model=args.base_model,
                seed=args.seed,
            )
            trained = train(config, examples, adapter_dir=args.adapter_dir)
            print(f"adapter -> {args.adapter_dir} (epoch losses: {trained.epoch_losses})")
            if args.predictions:
                write_predictions(predict(trained, examples), args.predictions)
                print(f"predictions -> {args.predictions}")
            return 0
        if args.command == "predict":
            from .train import load_adapter

            examples = read_examples(args.examples)
            trained = load_adapter(args.adapter_dir)
            rows = predict(trained, examples)
            write_predictions(rows, args.out)
            print(f"predictions -> {args.out}")
            return 0
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
