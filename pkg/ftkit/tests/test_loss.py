import math

import pytest
import torch

from ftkit.loss import LossContractError, restricted_label_loss


def test_hand_computed_two_label_case():
    # softmax([2, 0])[0] = e^2 / (e^2 + 1); loss = -log of that = 0.126928...
    logits = torch.tensor([0.0] * 10)
    logits[3], logits[7] = 2.0, 0.0
    loss = restricted_label_loss(logits, [3, 7], 0)
    assert abs(float(loss) - 0.1269) < 1e-4
    expected = -math.log(math.exp(2.0) / (math.exp(2.0) + 1.0))
    assert abs(float(loss) - expected) < 1e-6


@pytest.mark.parametrize("k", [2, 3, 4, 6, 26])
def test_uniform_logits_give_ln_k(k):
    logits = torch.zeros(k + 5, dtype=torch.float64)
    ids = list(range(k))
    for gold in (0, k - 1):
        loss = restricted_label_loss(logits, ids, gold)
        assert abs(float(loss) - math.log(k)) < 1e-12


def test_gold_logit_to_infinity_drives_loss_to_zero():
    logits = torch.zeros(4)
    logits[0] = 60.0
    assert float(restricted_label_loss(logits, [0, 1, 2], 0)) < 1e-12


def test_additive_shift_invariance():
    torch.manual_seed(0)
    logits = torch.randn(20, dtype=torch.float64)
    ids = [2, 5, 9, 13]
    base = restricted_label_loss(logits, ids, 1)
    for shift in (-100.0, -1.0, 3.5, 1e4):
        shifted = restricted_label_loss(logits + shift, ids, 1)
        assert abs(float(base) - float(shifted)) < 1e-9


def test_gradient_matches_finite_differences():
    torch.manual_seed(7)
    ids = [0, 3, 4, 8, 11]
    gold = 2
    logits = torch.randn(12, dtype=torch.float64, requires_grad=True)
    loss = restricted_label_loss(logits, ids, gold)
    loss.backward()
    analytic = logits.grad.clone()

    eps = 1e-6
    for i in range(12):
        bumped = logits.detach().clone()
        bumped[i] += eps
        up = float(restricted_label_loss(bumped, ids, gold))
        bumped[i] -= 2 * eps
        down = float(restricted_label_loss(bumped, ids, gold))
        numeric = (up - down) / (2 * eps)
        if abs(numeric) < 1e-12:
            assert abs(float(analytic[i])) < 1e-8
        else:
            rel = abs(float(analytic[i]) - numeric) / max(abs(numeric), 1e-12)
            assert rel < 1e-4, f"coordinate {i}: analytic {analytic[i]} vs numeric {numeric}"


def test_loss_contract_errors():
    logits = torch.zeros(5)
    with pytest.raises(LossContractError):
        restricted_label_loss(logits.unsqueeze(0), [0, 1], 0)  # not 1-D
    with pytest.raises(LossContractError):
        restricted_label_loss(logits, [1], 0)  # single label
    with pytest.raises(LossContractError):
        restricted_label_loss(logits, [1, 1], 0)  # duplicate token ids
    with pytest.raises(LossContractError):
        restricted_label_loss(logits, [0, 1], 5)  # gold out of range
