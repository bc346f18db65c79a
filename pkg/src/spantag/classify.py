"""Entity class inference from natural-language class descriptions.

A detected span is summarized by projecting the mean of its token
embeddings into a class-matching space. Each candidate class is summarized
*adaptively*: the mention vector queries a multi-head attention over the
frozen embeddings of the class description, so a description that mixes
several fine-grained themes contributes mostly the tokens relevant to this
mention. The match probability is the sigmoid of the dot product between
the mention vector and the adaptive class vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigError, DataError
from .spans import Span


@dataclass(frozen=True)
class ClassDescription:
    """Entity class name plus its natural-language description.

    Description text is tokenized lazily by whoever encodes it, so swapping
    descriptions (e.g. annotation guidelines instead of definitions) at
    evaluation time needs no retraining.
    """

    name: str
    text: str

    def __post_init__(self):
        if not self.name:
            raise DataError("class name must be non-empty")
        if not self.text or not self.text.strip():
            raise DataError(f"class {self.name!r} has an empty description")


class DescriptionAttention(nn.Module):
    """Multi-head attention with a single query per (mention, class) pair.

    Queries are mention vectors (M, h); keys and values are the description
    token embeddings (K, h). Internally widths map h -> attn_dim, split
    across heads, and the output projection maps back attn_dim -> h.
    """

    def __init__(self, embed_dim: int, attn_dim: int | None = None, n_heads: int = 4, dropout: float = 0.2):
        super().__init__()
        if attn_dim is None:
            attn_dim = embed_dim
        if attn_dim % n_heads != 0:
            raise ConfigError(f"n_heads ({n_heads}) must divide attn_dim ({attn_dim})")
        self.n_heads = n_heads
        self.head_dim = attn_dim // n_heads
        self.q_proj = nn.Linear(embed_dim, attn_dim)
        self.k_proj = nn.Linear(embed_dim, attn_dim)
        self.v_proj = nn.Linear(embed_dim, attn_dim)
        self.out_proj = nn.Linear(attn_dim, embed_dim)
        self.drop = nn.Dropout(dropout)
        # Identity-aligned init: before any training the attention reduces to
        # raw embedding dot products, so a mention already attends hardest to
        # description tokens sharing its embedding rows. Classes absent from
        # training keep this lexical-overlap behavior because their rows get
        # no gradient.
        for lin in (self.q_proj, self.k_proj, self.v_proj, self.out_proj):
            with torch.no_grad():
                lin.weight.copy_(torch.eye(lin.out_features, lin.in_features))
            nn.init.zeros_(lin.bias)

    def attention_weights(self, queries: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
        """Per-head softmax weights over description tokens, shape (M, heads, K)."""
        m = queries.shape[0]
        k = keys.shape[0]
        q = self.q_proj(queries).view(m, self.n_heads, self.head_dim)
        kk = self.k_proj(keys).view(k, self.n_heads, self.head_dim)
        scores = torch.einsum("mhd,khd->mhk", q, kk) / math.sqrt(self.head_dim)
        return torch.softmax(scores, dim=-1)

    def forward(self, queries: torch.Tensor, description: torch.Tensor) -> torch.Tensor:
        if queries.dim() == 1:
            return self.forward(queries.unsqueeze(0), description)[0]
        if queries.shape[-1] != self.q_proj.in_features:
            raise ConfigError(
                f"query width {queries.shape[-1]} does not match attention "
                f"input width {self.q_proj.in_features}"
            )
        if description.shape[-1] != queries.shape[-1]:
            raise ConfigError("description embedding width must match query width")
        weights = self.drop(self.attention_weights(queries, description))
        k = description.shape[0]
        v = self.v_proj(description).view(k, self.n_heads, self.head_dim)
        mixed = torch.einsum("mhk,khd->mhd", weights, v)
        return self.out_proj(mixed.reshape(queries.shape[0], -1))


class InferenceHeads(nn.Module):
    """Mention projection plus the description attention (or mean pooling).

    ``use_attention=False`` gives the reduced model: the adaptive class
    vector is replaced by the plain mean of the description embeddings.
    """

    def __init__(
        self,
        embed_dim: int,
        attn_dim: int | None = None,
        n_heads: int = 4,
        dropout: float = 0.2,
        use_attention: bool = True,
    ):
        super().__init__()
        self.embed_dim = embed_dim
        self.use_attention = use_attention
        # Identity init, same rationale as in DescriptionAttention.
        self.w_entity = nn.Parameter(torch.eye(embed_dim))
        self.attention = DescriptionAttention(embed_dim, attn_dim, n_heads, dropout)

    def mention(self, embeddings: torch.Tensor, span: Span) -> torch.Tensor:
        return mention_representation(embeddings, span, self.w_entity)

    def mentions(self, embeddings: torch.Tensor, spans) -> torch.Tensor:
        """Stacked mention vectors (M, h) for spans of a single sentence."""
        if not spans:
            return embeddings.new_zeros((0, self.embed_dim))
        pooled = torch.stack(
            [embeddings[s.start : s.end + 1].mean(dim=0) for s in spans]
        )
        return pooled @ self.w_entity.T

    def adapt(self, mentions: torch.Tensor, description: torch.Tensor) -> torch.Tensor:
        """Adaptive class vectors (M, h) for mention queries against one description."""
        if self.use_attention:
            return self.attention(mentions, description)
        pooled = description.mean(dim=0)
        if mentions.dim() == 1:
            return pooled
        return pooled.unsqueeze(0).expand(mentions.shape[0], -1)

    def class_logits(self, mentions: torch.Tensor, descriptions: list[torch.Tensor]) -> torch.Tensor:
        """Raw matching scores (M, C): dot(mention, adaptive class vector)."""
        if mentions.dim() == 1:
            mentions = mentions.unsqueeze(0)
        cols = []
        for desc in descriptions:
            adapted = self.adapt(mentions, desc)
            cols.append((mentions * adapted).sum(dim=-1))
        if not cols:
            raise ConfigError("at least one class description is required")
        return torch.stack(cols, dim=-1)


def mention_representation(
    embeddings: torch.Tensor, span: Span, w_entity: torch.Tensor
) -> torch.Tensor:
    """Project the average of the span's token embeddings into class space."""
    if span.end >= embeddings.shape[0]:
        raise DataError(
            f"span ({span.start}, {span.end}) out of bounds for {embeddings.shape[0]} tokens"
        )
    pooled = embeddings[span.start : span.end + 1].mean(dim=0)
    return w_entity @ pooled


def class_probability(mention: torch.Tensor, adapted: torch.Tensor) -> torch.Tensor:
    """Sigmoid matching probability between a mention and an adaptive class vector."""
    if mention.shape != adapted.shape:
        raise ConfigError("mention and class vectors must have equal widths")
    return torch.sigmoid((mention * adapted).sum(dim=-1))


def entity_loss_per_span(
    logits: torch.Tensor, gold_index: int | None, n_classes: int
) -> torch.Tensor:
    """Mean BCE over classes for one span's class logits (C,).

    ``gold_index is None`` marks a negative span: every class label is 0.
    """
    if logits.shape[-1] != n_classes:
        raise ConfigError("logit count must equal the class count")
    y = logits.new_zeros(n_classes)
    if gold_index is not None:
        if not 0 <= gold_index < n_classes:
            raise DataError(f"gold class index {gold_index} out of range")
        y[gold_index] = 1.0
    return nn.functional.binary_cross_entropy_with_logits(logits, y, reduction="mean")


def entity_loss(
    logits: torch.Tensor, gold_indices: list[int | None], n_classes: int
) -> torch.Tensor:
    """Mean over spans of the per-span class BCE; 0 for an empty span list."""
    if logits.shape[0] != len(gold_indices):
        raise ConfigError("one gold index (or None) is required per span")
    if not gold_indices:
        return logits.new_zeros(())
    y = logits.new_zeros(logits.shape)
    for row, gi in enumerate(gold_indices):
        if gi is not None:
            if not 0 <= gi < n_classes:
                raise DataError(f"gold class index {gi} out of range")
            y[row, gi] = 1.0
    per_span = nn.functional.binary_cross_entropy_with_logits(
        logits, y, reduction="none"
    ).mean(dim=-1)
    return per_span.mean()
