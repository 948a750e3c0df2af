import pytest
import torch

from ftkit.model import (
    LoRALinear,
    ModelError,
    TinyCausalLM,
    WordTokenizer,
    apply_lora,
    load_lora_state_dict,
    lora_state_dict,
)


def test_tokenizer_builds_vocab_and_idf():
    tok = WordTokenizer.build(["a b c", "a b d"], extra_tokens=["Z"])
    assert tok.encode("a b zzz") == [tok.ids["a"], tok.ids["b"], tok.ids[tok.UNK]]
    # 'a' appears in every text -> idf exactly 0; 'c' in one of two -> positive.
    assert tok.idf[tok.ids["a"]] == 0.0
    assert tok.idf[tok.ids["c"]] > 0.0


def test_tokenizer_single_token_verification():
    tok = WordTokenizer.build(["some text here"], extra_tokens=["A"])
    tok.verify_single_token(["A"])
    with pytest.raises(ModelError):
        tok.verify_single_token(["not present"])


def test_lora_wrap_is_identity_at_init():
    torch.manual_seed(0)
    model = TinyCausalLM(vocab_size=30, max_len=16, dim=32, heads=2, layers=1)
    ids = torch.tensor([1, 2, 3, 4, 5])
    with torch.no_grad():
        before = model(ids)
    apply_lora(model, rank=4, alpha=8)
    with torch.no_grad():
        after = model(ids)
    assert torch.allclose(before, after, atol=1e-6)


def test_apply_lora_freezes_base():
    torch.manual_seed(0)
    model = TinyCausalLM(vocab_size=30, max_len=16, dim=32, heads=2, layers=1)
    apply_lora(model, rank=4, alpha=8)
    trainable = {name for name, p in model.named_parameters() if p.requires_grad}
    assert trainable
    assert all("lora_a" in name or "lora_b" in name for name in trainable)


def test_lora_state_dict_round_trip():
    torch.manual_seed(0)
    model = TinyCausalLM(vocab_size=30, max_len=16, dim=32, heads=2, layers=1)
    apply_lora(model, rank=4, alpha=8)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "lora_b" in name:
                p.add_(torch.randn_like(p) * 0.1)
    state = lora_state_dict(model)

    torch.manual_seed(0)
    clone = TinyCausalLM(vocab_size=30, max_len=16, dim=32, heads=2, layers=1)
    apply_lora(clone, rank=4, alpha=8)
    load_lora_state_dict(clone, state)
    ids = torch.tensor([3, 1, 4, 1, 5])
    with torch.no_grad():
        assert torch.allclose(model(ids), clone(ids), atol=1e-6)


def test_sequence_length_guard():
    model = TinyCausalLM(vocab_size=10, max_len=4, dim=16, heads=2, layers=1)
    with pytest.raises(ModelError, match="max length"):
        model(torch.tensor([1, 2, 3, 4, 5]))


def test_forward_distinguishes_prefixes():
    torch.manual_seed(0)
    model = TinyCausalLM(vocab_size=50, max_len=20, dim=32, heads=2, layers=1)
    with torch.no_grad():
        a = model(torch.tensor([5, 6, 7, 1, 2, 3]))[-1]
        b = model(torch.tensor([10, 11, 12, 1, 2, 3]))[-1]
    assert float((a - b).abs().max()) > 1e-3


def test_hf_loading_gives_actionable_error_without_weights():
    from ftkit.model import load_hf_causal_lm

    try:
        import transformers  # noqa: F401
    except ImportError:
        with pytest.raises(ModelError, match="transformers"):
            load_hf_causal_lm("anything")
        return
    with pytest.raises(ModelError, match="could not load weights"):
        load_hf_causal_lm("/nonexistent/model/path")
