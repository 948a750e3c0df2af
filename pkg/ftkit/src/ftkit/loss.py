"""Cross-entropy over a restricted set of label tokens at the answer position."""

from __future__ import annotations

import torch
import torch.nn.functional as F


class LossContractError(Exception):
    pass


def restricted_label_loss(
    logits_at_answer_position: torch.Tensor,
    label_token_ids: list[int],
    gold_index: int,
) -> torch.Tensor:
    """-log softmax over only the label-token logits, taken at the gold label.

    ``logits_at_answer_position`` is the full-vocabulary logit vector at the
    single next-token position after the answer cue; every other position is
    ignored by construction. Invariant under a constant shift of all logits.
    """
    if logits_at_answer_position.dim() != 1:
        raise LossContractError(
            f"expected a 1-D logit vector, got shape {tuple(logits_at_answer_position.shape)}"
        )
    if len(label_token_ids) < 2:
        raise LossContractError("need at least two label tokens")
    if len(set(label_token_ids)) != len(label_token_ids):
        raise LossContractError("label token ids must be distinct single tokens")
    if not (0 <= gold_index < len(label_token_ids)):
        raise LossContractError(f"gold index {gold_index} out of range")
    restricted = logits_at_answer_position[
        torch.as_tensor(label_token_ids, dtype=torch.long, device=logits_at_answer_position.device)
    ]
    return F.cross_entropy(
        restricted.unsqueeze(0),
        torch.tensor([gold_index], device=restricted.device),
    )
