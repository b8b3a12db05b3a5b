"""A small decoder-only transformer with exposable attention maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class ToyModelConfig:
    vocab_size: int
    max_seq_len: int
    layers: int = 2
    heads: int = 4
    hidden: int = 128
    seed: int = 0
    positions: str = "learned"  # "learned" (absolute) or "rotary"

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def _rotary_angles(t: int, dim: int, device) -> tuple[torch.Tensor, torch.Tensor]:
    freqs = 1.0 / (10000.0 ** (torch.arange(0, dim, 2, device=device) / dim))
    angles = torch.arange(t, device=device)[:, None] * freqs[None]
    return angles.cos(), angles.sin()


def _apply_rotary(x: torch.Tensor, cos: torch.Tensor, sin: torch.Tensor):
    # x: (B, heads, T, head_dim); rotate consecutive pairs
    x1, x2 = x[..., 0::2], x[..., 1::2]
    out = torch.empty_like(x)
    out[..., 0::2] = x1 * cos - x2 * sin
    out[..., 1::2] = x1 * sin + x2 * cos
    return out


class CausalSelfAttention(nn.Module):
    def __init__(self, config: ToyModelConfig):
        super().__init__()
        assert config.hidden % config.heads == 0
        self.heads = config.heads
        self.head_dim = config.hidden // config.heads
        self.rotary = config.positions == "rotary"
        self.qkv = nn.Linear(config.hidden, 3 * config.hidden, bias=False)
        self.proj = nn.Linear(config.hidden, config.hidden, bias=False)

    def forward(self, x, return_probs=False):
        b, t, h = x.shape
        q, k, v = self.qkv(x).split(h, dim=2)
        q = q.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        k = k.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        v = v.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        if self.rotary:
            cos, sin = _rotary_angles(t, self.head_dim, x.device)
            q = _apply_rotary(q, cos, sin)
            k = _apply_rotary(k, cos, sin)
        probs = None
        if return_probs:
            scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
            mask = torch.triu(
                torch.ones(t, t, dtype=torch.bool, device=x.device), diagonal=1
            )
            scores = scores.masked_fill(mask, float("-inf"))
            probs = scores.softmax(dim=-1)
            out = probs @ v
        else:
            out = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        out = out.transpose(1, 2).reshape(b, t, h)
        return self.proj(out), probs


class Block(nn.Module):
    def __init__(self, config: ToyModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(config.hidden)
        self.attn = CausalSelfAttention(config)
        self.ln2 = nn.LayerNorm(config.hidden)
        self.mlp = nn.Sequential(
            nn.Linear(config.hidden, 4 * config.hidden),
            nn.GELU(),
            nn.Linear(4 * config.hidden, config.hidden),
        )

    def forward(self, x, return_probs=False):
        attn_out, probs = self.attn(self.ln1(x), return_probs)
        x = x + attn_out
        x = x + self.mlp(self.ln2(x))
        return x, probs


class ToyDecoder(nn.Module):
    def __init__(self, config: ToyModelConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        if config.positions not in ("learned", "rotary"):
            raise ValueError(f"unknown positions mode {config.positions!r}")
        self.tok_emb = nn.Embedding(config.vocab_size, config.hidden)
        self.pos_emb = (nn.Embedding(config.max_seq_len, config.hidden)
                        if config.positions == "learned" else None)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.layers))
        self.ln_f = nn.LayerNorm(config.hidden)
        self.head = nn.Linear(config.hidden, config.vocab_size, bias=False)
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module):
        # small init keeps initial logits near zero, so the first-batch loss
        # sits at ln(vocab) as for uniform predictions
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)

    def forward(self, tokens, return_attn=False):
        """tokens: (B, T) int64. Returns (logits, attention) where attention
        is a (B, layers, heads, T, T) tensor when requested."""
        b, t = tokens.shape
        if t > self.config.max_seq_len:
            raise ValueError(
                f"sequence length {t} exceeds context {self.config.max_seq_len}"
            )
        x = self.tok_emb(tokens)
        if self.pos_emb is not None:
            pos = torch.arange(t, device=tokens.device)
            x = x + self.pos_emb(pos)[None]
        all_probs = []
        for block in self.blocks:
            x, probs = block(x, return_probs=return_attn)
            if return_attn:
                all_probs.append(probs)
        logits = self.head(self.ln_f(x))
        attn = torch.stack(all_probs, dim=1) if return_attn else None
        return logits, attn

    def embedding_matrix(self) -> torch.Tensor:
        return self.tok_emb.weight.detach()
