"""LoRA training loop: cross-entropy over the restricted label set at the answer position."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .data import FinetuneExample
from .loss import restricted_label_loss
from .model import TinyCausalLM, WordTokenizer, apply_lora, lora_state_dict

logger = logging.getLogger(__name__)


class TrainError(Exception):
    pass


@dataclass
class TrainConfig:
    lora_rank: int = 16
    lora_alpha: int = 32
    batch_size: int = 1
    epochs: int = 3
    learning_rate: float = 2e-5
    precision: str = "fp16"
    base_model: str = "tiny"
    seed: int = 0
    # Tiny-model dimensions; ignored for HF-backed models.
    dim: int = 64
    heads: int = 4
    layers: int = 2


@dataclass
class TrainedModel:
    model: torch.nn.Module
    tokenizer: WordTokenizer
    config: TrainConfig
    epoch_losses: list[float] = field(default_factory=list)


def build_tiny_model(examples: list[FinetuneExample], config: TrainConfig) -> tuple[TinyCausalLM, WordTokenizer]:
    labels = sorted({label for ex in examples for label in ex.label_set})
    tokenizer = WordTokenizer.build([ex.prompt_text for ex in examples], extra_tokens=labels)
    tokenizer.verify_single_token(labels)
    max_len = max(len(tokenizer.encode(ex.prompt_text)) for ex in examples) + 2
    torch.manual_seed(config.seed)
    model = TinyCausalLM(
        tokenizer.vocab_size, max_len=max_len, dim=config.dim, heads=config.heads,
        layers=config.layers, token_weights=tokenizer.idf,
    )
    return model, tokenizer


def _example_loss(model, tokenizer, ex: FinetuneExample) -> torch.Tensor:
    ids = torch.as_tensor(tokenizer.encode(ex.prompt_text), dtype=torch.long)
    logits = model(ids)
    label_ids = [tokenizer.token_id(label) for label in ex.label_set]
    gold_index = ex.label_set.index(ex.gold_label)
    return restricted_label_loss(logits[-1], label_ids, gold_index)


def train(
    config: TrainConfig,
    dataset: list[FinetuneExample],
    adapter_dir: Path | None = None,
) -> TrainedModel:
    """Train LoRA adapters; returns the adapted model, per-epoch loss log attached.

    Only adapter parameters receive gradients. With epochs=0 the adapter equals
    its initialization (zero update) and the loss log is empty.
    """
    if not dataset:
        raise TrainError("empty training dataset")
    if config.base_model != "tiny":
        raise TrainError(
            f"desk-scale training supports base_model='tiny'; for {config.base_model!r} "
            "load weights via ftkit.model.load_hf_causal_lm on a GPU machine"
        )
    if config.precision == "fp16" and not torch.cuda.is_available():
        logger.warning("fp16 requested but no GPU available; training in fp32")

    model, tokenizer = build_tiny_model(dataset, config)
    apply_lora(model, config.lora_rank, config.lora_alpha)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(trainable, lr=config.learning_rate)

    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        order = list(dataset)
        random.Random(config.seed * 1000003 + epoch).shuffle(order)
        total = 0.0
        batch: list[torch.Tensor] = []
        for i, ex in enumerate(order):
            loss = _example_loss(model, tokenizer, ex)
            total += float(loss.detach())
            batch.append(loss)
            if len(batch) == config.batch_size or i == len(dataset) - 1:
                optimizer.zero_grad()
                torch.stack(batch).mean().backward()
                optimizer.step()
                batch = []
        epoch_losses.append(total / len(dataset))
        logger.info("epoch %d: mean loss %.4f", epoch + 1, epoch_losses[-1])

    trained = TrainedModel(model=model, tokenizer=tokenizer, config=config, epoch_losses=epoch_losses)
    if adapter_dir is not None:
        save_adapter(trained, adapter_dir)
    return trained


def save_adapter(trained: TrainedModel, adapter_dir: Path) -> None:
    """Adapter directory: adapter.pt (LoRA tensors), tokenizer.json, training_log.json."""
    adapter_dir = Path(adapter_dir)
    adapter_dir.mkdir(parents=True, exist_ok=True)
    torch.save(lora_state_dict(trained.model), adapter_dir / "adapter.pt")
    (adapter_dir / "tokenizer.json").write_text(
        json.dumps(
            {"tokens": trained.tokenizer.tokens, "idf": trained.tokenizer.idf},
            ensure_ascii=False,
        ),
        encoding="utf-8",
    )
    (adapter_dir / "training_log.json").write_text(
        json.dumps(
            {
                "epoch_losses": trained.epoch_losses,
                "config": {
                    "lora_rank": trained.config.lora_rank,
                    "lora_alpha": trained.config.lora_alpha,
                    "batch_size": trained.config.batch_size,
                    "epochs": trained.config.epochs,
                    "learning_rate": trained.config.learning_rate,
                    "precision": trained.config.precision,
                    "base_model": trained.config.base_model,
                    "seed": trained.config.seed,
                    "dim": trained.config.dim,
                    "heads": trained.config.heads,
                    "layers": trained.config.layers,
                },
                "model": {
                    "vocab_size": trained.tokenizer.vocab_size,
                    "max_len": trained.model.max_len if hasattr(trained.model, "max_len") else None,
                },
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )


def load_adapter(adapter_dir: Path) -> TrainedModel:
    """Rebuild the seeded base model and load the trained LoRA tensors onto it."""
    from .model import apply_lora, load_lora_state_dict

    adapter_dir = Path(adapter_dir)
    for required in ("adapter.pt", "tokenizer.json", "training_log.json"):
        if not (adapter_dir / required).exists():
            raise TrainError(f"adapter directory {adapter_dir} is missing {required}")
    log = json.loads((adapter_dir / "training_log.json").read_text(encoding="utf-8"))
    config = TrainConfig(**log["config"])
    tok_data = json.loads((adapter_dir / "tokenizer.json").read_text(encoding="utf-8"))
    tokenizer = WordTokenizer(tok_data["tokens"][1:], idf=tok_data.get("idf"))
    torch.manual_seed(config.seed)
    model = TinyCausalLM(
        log["model"]["vocab_size"],
        max_len=log["model"]["max_len"],
        dim=config.dim,
        heads=config.heads,
        layers=config.layers,
        token_weights=tokenizer.idf,
    )
    apply_lora(model, config.lora_rank, config.lora_alpha)
    load_lora_state_dict(model, torch.load(adapter_dir / "adapter.pt", weights_only=True))
    return TrainedModel(model=model, tokenizer=tokenizer, config=config, epoch_losses=log["epoch_losses"])


def evaluate_accuracy(trained: TrainedModel, examples: list[FinetuneExample]) -> float:
    """Argmax-over-labels accuracy of the adapted model on a set of examples."""
    correct = 0
    with torch.no_grad():
        for ex in examples:
            ids = torch.as_tensor(trained.tokenizer.encode(ex.prompt_text), dtype=torch.long)
            logits = trained.model(ids)[-1]
            label_ids = [trained.tokenizer.token_id(label) for label in ex.label_set]
            restricted = logits[torch.as_tensor(label_ids)]
            choice = ex.label_set[int(torch.argmax(restricted))]
            correct += choice == ex.gold_label
    return correct / len(examples)
