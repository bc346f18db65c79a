"""Class-agnostic span detection.

Three linear heads score every token as a span start, a span end, and a
span member. A candidate span (i, j) is scored by summing its start, end,
and member scores and squashing through a sigmoid. Training balances the
quadratic candidate space by sampling as many negative spans as there are
tokens left over after the gold ones.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Collection, Sequence

import torch
from torch import nn
from torch.nn import functional as F

from .errors import ConfigError, DataError
from .spans import Span, check_in_bounds, enumerate_spans


@dataclass
class TokenScores:
    """Per-token raw scores (pre-sigmoid), each of shape (N,)."""

    start: torch.Tensor
    end: torch.Tensor
    member: torch.Tensor

    def __post_init__(self):
        if not (self.start.shape == self.end.shape == self.member.shape):
            raise ConfigError("token score vectors must share a shape")

    @property
    def n_tokens(self) -> int:
        return self.start.shape[-1]

    def slice_sentence(self, row: int, n_tokens: int) -> "TokenScores":
        """Scores for one sentence of a (B, L) batch, trimmed to its real length."""
        if self.start.dim() != 2:
            raise ConfigError("slice_sentence expects batched (B, L) scores")
        return TokenScores(
            start=self.start[row, :n_tokens],
            end=self.end[row, :n_tokens],
            member=self.member[row, :n_tokens],
        )


@dataclass(frozen=True)
class SpanCandidateSets:
    """Gold spans and the sampled negative candidates for one sentence."""

    positives: tuple[Span, ...]
    negatives: tuple[Span, ...]

    def __post_init__(self):
        if set(self.positives) & set(self.negatives):
            raise DataError("positive and negative span sets must be disjoint")


@dataclass(frozen=True)
class SpanLosses:
    """Span objective components; ``total`` is their exact sum."""

    start: float
    end: float
    match: float
    total: float


class DetectionHeads(nn.Module):
    """Bias-free linear classifiers over token embeddings."""

    def __init__(self, embed_dim: int):
        super().__init__()
        self.embed_dim = embed_dim
        self.w_start = nn.Parameter(torch.zeros(embed_dim))
        self.w_end = nn.Parameter(torch.zeros(embed_dim))
        self.w_member = nn.Parameter(torch.zeros(embed_dim))
        for w in (self.w_start, self.w_end, self.w_member):
            nn.init.normal_(w, std=0.1)

    def forward(self, embeddings: torch.Tensor) -> TokenScores:
        return score_tokens(embeddings, self)


def score_tokens(embeddings: torch.Tensor, heads: DetectionHeads) -> TokenScores:
    """Dot each token embedding against the three head vectors.

    ``embeddings`` is (N, h) for one sentence or (B, L, h) for a batch; the
    score vectors mirror the leading shape.
    """
    if embeddings.shape[-1] != heads.embed_dim:
        raise ConfigError(
            f"embedding width {embeddings.shape[-1]} does not match "
            f"detection heads width {heads.embed_dim}"
        )
    return TokenScores(
        start=embeddings @ heads.w_start,
        end=embeddings @ heads.w_end,
        member=embeddings @ heads.w_member,
    )


def token_probability(score):
    """Sigmoid of a raw token score; accepts floats or tensors."""
    return torch.sigmoid(torch.as_tensor(score, dtype=torch.float64))


def member_cumsum(scores: TokenScores) -> torch.Tensor:
    """Prefix sums of member scores; entry t is the sum over tokens [0, t)."""
    zero = scores.member.new_zeros(1)
    return torch.cat([zero, torch.cumsum(scores.member, dim=-1)])


def span_match_logit(span: Span, scores: TokenScores, cumsum: torch.Tensor | None = None):
    """Raw score of span (i, j): start(i) + end(j) + sum of member scores in [i, j]."""
    if span.end >= scores.n_tokens:
        raise DataError(f"span ({span.start}, {span.end}) out of bounds for N={scores.n_tokens}")
    if cumsum is None:
        cumsum = member_cumsum(scores)
    return scores.start[span.start] + scores.end[span.end] + cumsum[span.end + 1] - cumsum[span.start]


def span_match_probability(span: Span, scores: TokenScores) -> torch.Tensor:
    return torch.sigmoid(span_match_logit(span, scores))


def batch_match_logits(spans: Sequence[Span], scores: TokenScores) -> torch.Tensor:
    """Vector of match logits for a list of spans in one sentence."""
    if not spans:
        return scores.start.new_zeros(0)
    check_in_bounds(spans, scores.n_tokens)
    cs = member_cumsum(scores)
    i = torch.tensor([s.start for s in spans], dtype=torch.long)
    j = torch.tensor([s.end for s in spans], dtype=torch.long)
    return scores.start[i] + scores.end[j] + cs[j + 1] - cs[i]


def negative_sample_count(n_tokens: int, n_gold: int, pool_size: int) -> int:
    """How many negatives to draw: token count minus gold count, pool-capped."""
    return min(max(0, n_tokens - n_gold), pool_size)


def negative_pool(n_tokens: int, gold: Collection[Span], max_span_len: int) -> list[Span]:
    """Candidate negatives: every span up to max_span_len except the gold ones."""
    gold_set = set(gold)
    check_in_bounds(gold_set, n_tokens)
    return [s for s in enumerate_spans(n_tokens, max_span_len) if s not in gold_set]


def sample_negative_spans(
    n_tokens: int,
    gold: Collection[Span],
    max_span_len: int,
    rng: random.Random,
) -> SpanCandidateSets:
    """Draw negative span candidates uniformly without replacement.

    The target count is ``max(0, n_tokens - |gold|)``, matching the count of
    start/end label positions; when the eligible pool (spans no longer than
    ``max_span_len``, excluding gold) is smaller, the whole pool is taken.
    """
    if n_tokens < 1:
        raise DataError(f"sentence must have at least 1 token, got {n_tokens}")
    if max_span_len < 1:
        raise ConfigError(f"max_span_len must be >= 1, got {max_span_len}")
    gold_set = set(gold)
    pool = negative_pool(n_tokens, gold_set, max_span_len)
    take = negative_sample_count(n_tokens, len(gold_set), len(pool))
    negatives = tuple(rng.sample(pool, take)) if take else ()
    return SpanCandidateSets(positives=tuple(sorted(gold_set)), negatives=negatives)


def start_end_labels(n_tokens: int, gold: Collection[Span]) -> tuple[torch.Tensor, torch.Tensor]:
    """Binary start/end label vectors: 1 where some gold span starts (ends)."""
    y_start = torch.zeros(n_tokens, dtype=torch.float64)
    y_end = torch.zeros(n_tokens, dtype=torch.float64)
    check_in_bounds(gold, n_tokens)
    for s in gold:
        y_start[s.start] = 1.0
        y_end[s.end] = 1.0
    return y_start, y_end


def start_end_losses(
    scores: TokenScores, gold: Collection[Span]
) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean binary cross-entropy of the start and end heads over all N tokens."""
    n = scores.n_tokens
    y_start, y_end = start_end_labels(n, gold)
    l_start = F.binary_cross_entropy_with_logits(scores.start, y_start, reduction="mean")
    l_end = F.binary_cross_entropy_with_logits(scores.end, y_end, reduction="mean")
    return l_start, l_end


def match_loss(sets: SpanCandidateSets, scores: TokenScores) -> torch.Tensor:
    """Span match loss, normalized by the token count N (not the candidate count).

    Uses softplus forms so the loss stays finite for saturated scores:
    -log sigmoid(z) = softplus(-z) and -log(1 - sigmoid(z)) = softplus(z).
    """
    n = scores.n_tokens
    pos = batch_match_logits(sets.positives, scores)
    neg = batch_match_logits(sets.negatives, scores)
    total = F.softplus(-pos).sum() + F.softplus(neg).sum()
    return total / n


def span_loss(l_start, l_end, l_match) -> SpanLosses:
    """Combine the three components; the total is their exact sum."""
    a, b, c = (float(x) for x in (l_start, l_end, l_match))
    return SpanLosses(start=a, end=b, match=c, total=a + b + c)
