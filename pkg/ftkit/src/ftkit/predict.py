"""Prediction export in the evaluation pipeline's predictions JSONL schema."""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .data import FinetuneExample
from .train import TrainedModel

PREDICTION_KEYS = ("instance_id", "predicted_frame", "gold_frame", "decode_path", "run_id")


class PredictError(Exception):
    pass


def predict(trained: TrainedModel, examples: list[FinetuneExample], run_id: str = "ftkit") -> list[dict]:
    """Argmax over restricted label logits per example, as prediction rows."""
    rows: list[dict] = []
    with torch.no_grad():
        for ex in examples:
            ids = torch.as_tensor(trained.tokenizer.encode(ex.prompt_text), dtype=torch.long)
            logits = trained.model(ids)[-1]
            label_ids = [trained.tokenizer.token_id(label) for label in ex.label_set]
            restricted = logits[torch.as_tensor(label_ids)]
            label = ex.label_set[int(torch.argmax(restricted))]
            rows.append(
                {
                    "instance_id": ex.instance_id,
                    "predicted_frame": ex.label_frames[label],
                    "gold_frame": ex.gold_frame,
                    "decode_path": "logprob_argmax",
                    "run_id": run_id,
                }
            )
    rows.sort(key=lambda r: r["instance_id"])
    return rows


def validate_prediction_rows(rows: list[dict]) -> None:
    for i, row in enumerate(rows):
        missing = [key for key in PREDICTION_KEYS if key not in row]
        if missing:
            raise PredictError(f"prediction row {i} missing keys {missing}")
        if row["predicted_frame"] is not None and not isinstance(row["predicted_frame"], str):
            raise PredictError(f"prediction row {i}: predicted_frame must be a string or null")


def write_predictions(rows: list[dict], path: Path) -> None:
    validate_prediction_rows(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
