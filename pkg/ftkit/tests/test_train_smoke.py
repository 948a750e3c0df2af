"""Secondary acceptance: loss criteria and the 100-example overfit smoke run."""

import json
import math
import subprocess
import sys

import pytest
import torch

from ftkit.loss import restricted_label_loss
from ftkit.predict import PredictError, predict, validate_prediction_rows, write_predictions
from ftkit.train import TrainConfig, TrainError, evaluate_accuracy, load_adapter, train

SMOKE_CONFIG = TrainConfig(epochs=3, learning_rate=5e-3, seed=0, dim=128, precision="fp32")


@pytest.fixture(scope="module")
def trained_smoke(smoke_examples, tmp_path_factory):
    adapter_dir = tmp_path_factory.mktemp("adapter")
    trained = train(SMOKE_CONFIG, smoke_examples, adapter_dir=adapter_dir)
    return trained, adapter_dir


def test_acceptance_restricted_label_loss():
    logits = torch.zeros(8)
    logits[0], logits[1] = 2.0, 0.0
    hand = restricted_label_loss(logits, [0, 1], 0)
    assert abs(float(hand) - 0.1269) < 1e-4

    for k in (2, 3, 5):
        uniform = restricted_label_loss(torch.zeros(k, dtype=torch.float64), list(range(k)), k - 1)
        assert abs(float(uniform) - math.log(k)) < 1e-12

    torch.manual_seed(1)
    x = torch.randn(9, dtype=torch.float64, requires_grad=True)
    ids = [1, 4, 7]
    loss = restricted_label_loss(x, ids, 0)
    loss.backward()
    eps = 1e-6
    for i in range(9):
        bumped = x.detach().clone()
        bumped[i] += eps
        up = float(restricted_label_loss(bumped, ids, 0))
        bumped[i] -= 2 * eps
        down = float(restricted_label_loss(bumped, ids, 0))
        numeric = (up - down) / (2 * eps)
        analytic = float(x.grad[i])
        if abs(numeric) < 1e-12:
            assert abs(analytic) < 1e-8
        else:
            assert abs(analytic - numeric) / max(abs(numeric), 1e-12) < 1e-4
    print("ACCEPTANCE restricted-label-loss: PASS")


def test_acceptance_overfit_smoke(trained_smoke, smoke_examples, tmp_path):
    trained, adapter_dir = trained_smoke
    assert trained.epoch_losses == sorted(trained.epoch_losses, reverse=True), "loss must be non-increasing"
    accuracy = evaluate_accuracy(trained, smoke_examples)
    assert accuracy == 1.0, f"overfit smoke reached only {accuracy:.3f}"

    rows = predict(trained, smoke_examples, run_id="smoke")
    validate_prediction_rows(rows)
    path = tmp_path / "predictions.jsonl"
    write_predictions(rows, path)

    # The evaluation pipeline must score the file without modification.
    result = subprocess.run(
        [sys.executable, "-m", "framescope.cli", "eval", "report", "--predictions", str(path)],
        capture_output=True,
        text=True,
        check=True,
    )
    summary = json.loads(result.stdout)
    assert summary["instances"] == 100
    assert summary["accuracy"] == 1.0
    assert summary["parse_failure_rate"] == 0.0
    print("ACCEPTANCE overfit-smoke: PASS (train accuracy 1.000, scored by the eval pipeline)")


def test_adapter_round_trip_reproduces_predictions(trained_smoke, smoke_examples):
    trained, adapter_dir = trained_smoke
    reloaded = load_adapter(adapter_dir)
    assert reloaded.epoch_losses == trained.epoch_losses
    direct = predict(trained, smoke_examples)
    via_disk = predict(reloaded, smoke_examples)
    assert direct == via_disk


def test_zero_epochs_leaves_adapter_at_init(smoke_examples, tmp_path):
    config = TrainConfig(epochs=0, learning_rate=5e-3, seed=0, dim=64, precision="fp32")
    trained = train(config, smoke_examples, adapter_dir=tmp_path / "adapter0")
    assert trained.epoch_losses == []
    state = torch.load(tmp_path / "adapter0" / "adapter.pt", weights_only=True)
    assert all(float(v.abs().max()) == 0.0 for k, v in state.items() if "lora_b" in k)


def test_untrained_adapter_is_chance_level(smoke_examples):
    config = TrainConfig(epochs=0, learning_rate=5e-3, seed=0, dim=64, precision="fp32")
    trained = train(config, smoke_examples)
    accuracy = evaluate_accuracy(trained, smoke_examples)
    # Balanced two-label fixture: an untrained model sits near 50%.
    assert 0.3 <= accuracy <= 0.7


def test_training_accuracy_is_seed_robust(smoke_examples):
    for seed in (1, 2):
        config = TrainConfig(epochs=3, learning_rate=5e-3, seed=seed, dim=128, precision="fp32")
        trained = train(config, smoke_examples)
        assert evaluate_accuracy(trained, smoke_examples) == 1.0


def test_train_rejects_unloadable_base(smoke_examples):
    with pytest.raises(TrainError, match="tiny"):
        train(TrainConfig(base_model="Llama-3.1-8B"), smoke_examples)


def test_train_rejects_empty_dataset():
    with pytest.raises(TrainError, match="empty"):
        train(SMOKE_CONFIG, [])


def test_prediction_schema_validation():
    good = {"instance_id": "a", "predicted_frame": "F", "gold_frame": "F",
            "decode_path": "logprob_argmax", "run_id": "r"}
    validate_prediction_rows([good])
    with pytest.raises(PredictError, match="missing keys"):
        validate_prediction_rows([{k: v for k, v in good.items() if k != "gold_frame"}])
