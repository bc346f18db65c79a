"""Tiny trainable transformer producing contextual token embeddings.

This is the default context encoder and, as a frozen copy, the description
encoder. It is deliberately small: word-level embeddings, learned positions,
a couple of pre-norm self-attention blocks. Pre-norm keeps a residual path
from the raw token embedding to the output, which helps the class-inference
side match mention tokens against description tokens.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ConfigError, DataError
from .vocab import PAD_ID


@dataclass
class EncoderConfig:
    embed_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    dropout: float = 0.1
    max_len: int = 128
    max_desc_len: int = 32
    # init scales: embeddings carry the token-identity signal, residual
    # branches start small so the block is near-identity at init
    embed_init_std: float = 0.5
    proj_init_std: float = 0.05

    def validate(self) -> None:
        if self.embed_dim <= 0 or self.n_layers <= 0 or self.max_len <= 0:
            raise ConfigError("encoder dimensions must be positive")
        if self.embed_dim % self.n_heads != 0:
            raise ConfigError(
                f"n_heads ({self.n_heads}) must divide embed_dim ({self.embed_dim})"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, n_heads: int, dropout: float, proj_init_std: float):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)
        nn.init.normal_(self.qkv.weight, std=0.05)
        nn.init.zeros_(self.qkv.bias)
        nn.init.normal_(self.out.weight, std=proj_init_std)
        nn.init.zeros_(self.out.bias)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # x: (B, L, D); mask: (B, L) True at real tokens
        b, l, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(b, l, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(b, l, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(b, l, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        key_mask = mask[:, None, None, :]  # (B, 1, 1, L)
        scores = scores.masked_fill(~key_mask, float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        attn = self.drop(attn)
        out = (attn @ v).transpose(1, 2).reshape(b, l, d)
        return self.out(out)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.embed_dim)
        self.attn = SelfAttention(cfg.embed_dim, cfg.n_heads, cfg.dropout, cfg.proj_init_std)
        self.norm2 = nn.LayerNorm(cfg.embed_dim)
        self.ff_in = nn.Linear(cfg.embed_dim, cfg.ffn_dim)
        self.ff_out = nn.Linear(cfg.ffn_dim, cfg.embed_dim)
        self.drop = nn.Dropout(cfg.dropout)
        nn.init.normal_(self.ff_in.weight, std=0.05)
        nn.init.zeros_(self.ff_in.bias)
        nn.init.normal_(self.ff_out.weight, std=cfg.proj_init_std)
        nn.init.zeros_(self.ff_out.bias)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = x + self.drop(self.attn(self.norm1(x), mask))
        x = x + self.drop(self.ff_out(torch.nn.functional.gelu(self.ff_in(self.norm2(x)))))
        return x


class NeighborMix(nn.Module):
    """Residual read of the two adjacent token embeddings.

    Boundary decisions are often strictly local (the token just before a
    span, the token just after), and soft attention is a blunt tool for
    "exactly one position over". This layer adds linear views of positions
    t-1 and t+1 onto each token so a linear probe can use them directly.
    The residual keeps the token's own embedding dominant at init.
    """

    def __init__(self, dim: int, init_std: float):
        super().__init__()
        self.left = nn.Linear(dim, dim, bias=False)
        self.right = nn.Linear(dim, dim, bias=False)
        nn.init.normal_(self.left.weight, std=init_std)
        nn.init.normal_(self.right.weight, std=init_std)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        xm = x * mask.unsqueeze(-1)
        before = torch.nn.functional.pad(xm, (0, 0, 1, 0))[:, :-1]
        after = torch.nn.functional.pad(xm, (0, 0, 0, 1))[:, 1:]
        return x + self.left(before) + self.right(after)


class TokenEncoder(nn.Module):
    """Maps padded id batches (B, L) to embedding matrices (B, L, embed_dim)."""

    def __init__(self, vocab_size: int, cfg: EncoderConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.embed = nn.Embedding(vocab_size, cfg.embed_dim, padding_idx=PAD_ID)
        self.pos = nn.Embedding(cfg.max_len, cfg.embed_dim)
        self.drop = nn.Dropout(cfg.dropout)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.neighbor = NeighborMix(cfg.embed_dim, cfg.proj_init_std)
        # pre-norm stacks need a closing norm or the residual stream drifts
        self.norm_out = nn.LayerNorm(cfg.embed_dim)
        nn.init.normal_(self.embed.weight, std=cfg.embed_init_std)
        with torch.no_grad():
            self.embed.weight[PAD_ID].zero_()
        nn.init.normal_(self.pos.weight, std=0.05)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        if ids.dim() == 1:
            ids = ids.unsqueeze(0)
            if mask is not None and mask.dim() == 1:
                mask = mask.unsqueeze(0)
        if mask is None:
            mask = ids != PAD_ID
        if ids.numel() and (int(ids.max()) >= self.vocab_size or int(ids.min()) < 0):
            raise DataError(
                f"token id out of range [0, {self.vocab_size}) in input batch"
            )
        if ids.shape[1] > self.cfg.max_len:
            raise DataError(
                f"sequence of {ids.shape[1]} tokens exceeds max length {self.cfg.max_len}"
            )
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.embed(ids) + self.pos(positions)[None, :, :]
        x = self.drop(x)
        for layer in self.layers:
            x = layer(x, mask)
        x = self.neighbor(x, mask)
        return self.norm_out(x)

    def encode_one(self, ids: list[int] | torch.Tensor) -> torch.Tensor:
        """Embedding matrix (N, embed_dim) for a single sentence."""
        t = torch.as_tensor(ids, dtype=torch.long)
        if t.numel() == 0:
            raise DataError("cannot encode an empty token sequence")
        return self.forward(t.unsqueeze(0))[0]


def freeze(module: nn.Module) -> nn.Module:
    """Exclude a module from optimization and disable its dropout."""
    for p in module.parameters():
        p.requires_grad_(False)
    module.eval()
    return module


def frozen_copy(encoder: TokenEncoder) -> TokenEncoder:
    """Deep-copied encoder with identical weights, frozen."""
    return freeze(copy.deepcopy(encoder))
