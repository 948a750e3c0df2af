"""Causal LMs for restricted-label training: a self-contained tiny transformer
for desk-scale runs, LoRA adapters, and an optional HF-backed path for full-scale models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


class ModelError(Exception):
    pass


class WordTokenizer:
    """Whitespace tokenizer over a fixed vocabulary; labels are single tokens by construction.

    Carries per-token IDF weights (log N/df over the training texts): boilerplate
    shared by every prompt weighs exactly zero, so the model's content bag sees
    only what distinguishes one example from another.
    """

    UNK = "<unk>"

    def __init__(self, vocab: list[str], idf: list[float] | None = None):
        self.tokens = [self.UNK] + [t for t in vocab if t != self.UNK]
        self.ids = {tok: i for i, tok in enumerate(self.tokens)}
        if idf is None:
            idf = [0.0] * len(self.tokens)
        if len(idf) != len(self.tokens):
            raise ModelError("idf weight list does not match vocabulary size")
        self.idf = list(idf)

    @classmethod
    def build(cls, texts: list[str], extra_tokens: list[str] = ()) -> "WordTokenizer":
        seen: dict[str, None] = {}
        df: dict[str, int] = {}
        for text in texts:
            toks = text.split()
            for tok in toks:
                seen.setdefault(tok, None)
            for tok in set(toks):
                df[tok] = df.get(tok, 0) + 1
        for tok in extra_tokens:
            seen.setdefault(tok, None)
        n_docs = max(len(texts), 1)
        vocab = list(seen)
        idf = [0.0] + [math.log(n_docs / df[t]) if df.get(t) else 0.0 for t in vocab]
        return cls(vocab, idf=idf)

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> list[int]:
        unk = self.ids[self.UNK]
        return [self.ids.get(tok, unk) for tok in text.split()]

    def token_id(self, token: str) -> int:
        if token not in self.ids:
            raise ModelError(f"token {token!r} not in vocabulary")
        return self.ids[token]

    def verify_single_token(self, labels: list[str]) -> None:
        for label in labels:
            encoded = self.encode(label)
            if len(encoded) != 1 or self.tokens[encoded[0]] != label:
                raise ModelError(f"label {label!r} is not a single token under this tokenizer")


class _CausalSelfAttention(nn.Module):
    """Explicit q/k/v/out projections so LoRA can wrap each one."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise ModelError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, n, d = x.shape
        def split(t):
            return t.view(b, n, self.heads, d // self.heads).transpose(1, 2)
        q, k, v = split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x))
        att = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        return self.out_proj(att.transpose(1, 2).reshape(b, n, d))


class _Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = _CausalSelfAttention(dim, heads)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim)
        )

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        x = x + self.mlp(self.ln2(x))
        return x


class TinyCausalLM(nn.Module):
    """A minimal GPT-style LM built to memorize a small QA set quickly.

    Alongside attention, every position receives a causal IDF-weighted bag of
    the tokens so far. Prompt boilerplate weighs zero in that bag, so the
    representation at the answer cue is dominated by what is unique to the
    example rather than by the template every prompt shares.
    """

    CONTENT_GAIN = 3.0

    def __init__(
        self,
        vocab_size: int,
        max_len: int,
        dim: int = 64,
        heads: int = 4,
        layers: int = 2,
        token_weights: list[float] | None = None,
    ):
        super().__init__()
        self.max_len = max_len
        self.tok_emb = nn.Embedding(vocab_size, dim)
        self.pos_emb = nn.Embedding(max_len, dim)
        weights = torch.ones(vocab_size) if token_weights is None else torch.as_tensor(token_weights, dtype=torch.float32)
        if weights.numel() != vocab_size:
            raise ModelError("token_weights does not match vocabulary size")
        self.register_buffer("content_weights", weights)
        self.blocks = nn.ModuleList(_Block(dim, heads) for _ in range(layers))
        self.ln_f = nn.LayerNorm(dim)
        self.lm_head = nn.Linear(dim, vocab_size, bias=False)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        """ids: (seq,) or (1, seq) -> logits (seq, vocab)."""
        if ids.dim() == 1:
            ids = ids.unsqueeze(0)
        n = ids.size(1)
        if n > self.max_len:
            raise ModelError(f"sequence of {n} tokens exceeds model max length {self.max_len}")
        pos = torch.arange(n, device=ids.device)
        emb = self.tok_emb(ids)
        w = self.content_weights[ids].unsqueeze(-1)
        denom = torch.sqrt(torch.cumsum(w.squeeze(-1) ** 2, dim=1)).clamp(min=1.0)
        content = torch.cumsum(emb * w, dim=1) / denom.unsqueeze(-1)
        x = emb + self.pos_emb(pos)[None, :, :] + self.CONTENT_GAIN * content
        for block in self.blocks:
            x = block(x)
        return self.lm_head(self.ln_f(x)).squeeze(0)


class LoRALinear(nn.Module):
    """nn.Linear frozen in place, with a trainable low-rank update B @ A scaled by alpha/rank."""

    def __init__(self, base: nn.Linear, rank: int, alpha: int):
        super().__init__()
        self.base = base
        for param in self.base.parameters():
            param.requires_grad = False
        self.rank = rank
        self.scaling = alpha / rank
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        # Kaiming init for A, zeros for B: the adapter starts as the identity.
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))

    def forward(self, x):
        return self.base(x) + F.linear(F.linear(x, self.lora_a), self.lora_b) * self.scaling


def apply_lora(model: nn.Module, rank: int, alpha: int) -> nn.Module:
    """Freeze the base model and wrap every Linear (attention, MLP, head) with LoRA."""
    for param in model.parameters():
        param.requires_grad = False

    def _wrap(module: nn.Module):
        for name, child in module.named_children():
            if isinstance(child, nn.Linear):
                setattr(module, name, LoRALinear(child, rank, alpha))
            elif isinstance(child, LoRALinear):
                continue
            else:
                _wrap(child)

    _wrap(model)
    return model


def lora_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: tensor.detach().clone()
        for name, tensor in model.state_dict().items()
        if "lora_a" in name or "lora_b" in name
    }


def load_lora_state_dict(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    missing = model.load_state_dict(state, strict=False)
    unexpected = [k for k in missing.unexpected_keys]
    if unexpected:
        raise ModelError(f"adapter has keys not present in the model: {unexpected[:5]}")


@dataclass
class HFModelBundle:
    model: "object"
    tokenizer: "object"


def load_hf_causal_lm(base_model: str, precision: str = "fp16") -> HFModelBundle:
    """Load a Hugging Face causal LM for full-scale training; fails with actionable messages."""
    try:
        import transformers
    except ImportError as exc:
        raise ModelError(
            "full-scale training needs the 'transformers' package; install it or use base_model='tiny'"
        ) from exc
    dtype = torch.float16 if precision == "fp16" and torch.cuda.is_available() else torch.float32
    try:
        tokenizer = transformers.AutoTokenizer.from_pretrained(base_model)
        model = transformers.AutoModelForCausalLM.from_pretrained(base_model, torch_dtype=dtype)
    except OSError as exc:
        raise ModelError(
            f"could not load weights for {base_model!r}: {exc}. "
            "Download the model locally or point base_model at a local path."
        ) from exc
    return HFModelBundle(model=model, tokenizer=tokenizer)
