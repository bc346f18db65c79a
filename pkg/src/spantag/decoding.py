"""Inference-time decoding for the few-shot and zero-shot regimes.

Span extraction keeps the consensus between the index heads and the match
head: a candidate needs its start index, end index, and whole-span match
probability to all pass their thresholds. Extracted spans are then labeled
either by independent per-class boundaries (few-shot) or by a softmax over
raw class scores filtered on a joint detection+inference score (zero-shot).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import torch

from .classify import ClassDescription
from .detector import TokenScores, batch_match_logits
from .errors import ConfigError
from .model import SpanTagger
from .spans import Span
from .vocab import tokenize

OVERLAP_POLICIES = ("flat-greedy", "allow-nested")


@dataclass
class DecodingConfig:
    index_threshold: float = 0.5  # start/end probability cut
    match_threshold: float = 0.5  # whole-span match probability cut
    class_boundary: float = 0.5  # few-shot per-class decision boundary
    gamma: float | None = None  # zero-shot joint-score threshold
    max_span_len: int = 10
    overlap_policy: str = "flat-greedy"

    def validate(self) -> None:
        if self.max_span_len < 1:
            raise ConfigError(f"max_span_len must be >= 1, got {self.max_span_len}")
        if self.overlap_policy not in OVERLAP_POLICIES:
            raise ConfigError(
                f"unknown overlap policy {self.overlap_policy!r}; "
                f"expected one of {OVERLAP_POLICIES}"
            )
        for name in ("index_threshold", "match_threshold", "class_boundary"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite")


@dataclass(frozen=True)
class ScoredSpan:
    span: Span
    p_match: float


@dataclass(frozen=True)
class TypedSpanPrediction:
    span: Span
    label: str
    p_match: float
    class_score: float
    joint_score: float | None = None

    @property
    def sort_score(self) -> float:
        return self.joint_score if self.joint_score is not None else self.p_match

    @property
    def typed_tuple(self) -> tuple[int, int, str]:
        return (self.span.start, self.span.end, self.label)


def extract_consensus_spans(scores: TokenScores, config: DecodingConfig) -> list[ScoredSpan]:
    """Candidate spans passing the start, end, and match filters, in (i, j) order."""
    config.validate()
    with torch.no_grad():
        p_start = torch.sigmoid(scores.start)
        p_end = torch.sigmoid(scores.end)
        starts = [i for i in range(scores.n_tokens) if float(p_start[i]) > config.index_threshold]
        ends = [j for j in range(scores.n_tokens) if float(p_end[j]) > config.index_threshold]
        candidates = [
            Span(i, j)
            for i in starts
            for j in ends
            if i <= j and j - i < config.max_span_len
        ]
        if not candidates:
            return []
        p_match = torch.sigmoid(batch_match_logits(candidates, scores))
        return [
            ScoredSpan(span=c, p_match=float(p))
            for c, p in zip(candidates, p_match)
            if float(p) > config.match_threshold
        ]


def decode_few_shot(
    scored_spans: list[ScoredSpan],
    class_probs: torch.Tensor,
    class_names: list[str],
    config: DecodingConfig,
) -> list[TypedSpanPrediction]:
    """Label spans whose best class clears the per-class decision boundary.

    Every class is an independent binary decision; when several clear the
    boundary the highest probability wins, and spans with no class above the
    boundary are dropped.
    """
    if not class_names:
        raise ConfigError("few-shot decoding requires at least one class")
    out = []
    for row, scored in enumerate(scored_spans):
        probs = class_probs[row]
        best = int(torch.argmax(probs))
        best_p = float(probs[best])
        if best_p > config.class_boundary:
            out.append(
                TypedSpanPrediction(
                    span=scored.span,
                    label=class_names[best],
                    p_match=scored.p_match,
                    class_score=best_p,
                )
            )
    return resolve_overlaps(out, config.overlap_policy)


def decode_zero_shot(
    scored_spans: list[ScoredSpan],
    class_logits: torch.Tensor,
    class_names: list[str],
    config: DecodingConfig,
) -> list[TypedSpanPrediction]:
    """Label spans by softmax over raw class scores, filtered on the joint score.

    The softmax is over pre-sigmoid matching scores, giving a relative score
    across classes; a span is kept when log(p_match) + log(softmax score)
    exceeds the threshold ``gamma``.
    """
    if not class_names:
        raise ConfigError("zero-shot decoding requires at least one class")
    if config.gamma is None:
        raise ConfigError("zero-shot decoding requires a gamma threshold")
    def safe_log(p: float) -> float:
        return math.log(p) if p > 0.0 else float("-inf")

    out = []
    for row, scored in enumerate(scored_spans):
        rel = torch.softmax(class_logits[row], dim=-1)
        best = int(torch.argmax(rel))
        rel_best = float(rel[best])
        joint = safe_log(scored.p_match) + safe_log(rel_best)
        if joint > config.gamma:
            out.append(
                TypedSpanPrediction(
                    span=scored.span,
                    label=class_names[best],
                    p_match=scored.p_match,
                    class_score=rel_best,
                    joint_score=joint,
                )
            )
    return resolve_overlaps(out, config.overlap_policy)


def resolve_overlaps(
    predictions: list[TypedSpanPrediction], policy: str = "flat-greedy"
) -> list[TypedSpanPrediction]:
    """Flat-greedy keeps spans best-score-first, skipping any that overlap a
    kept span; allow-nested returns the input unchanged."""
    if policy == "allow-nested":
        return list(predictions)
    if policy != "flat-greedy":
        raise ConfigError(f"unknown overlap policy {policy!r}")
    ranked = sorted(
        predictions, key=lambda p: (-p.sort_score, p.span.start, p.span.end, p.label)
    )
    kept: list[TypedSpanPrediction] = []
    for pred in ranked:
        if all(not pred.span.overlaps(k.span) for k in kept):
            kept.append(pred)
    return sorted(kept, key=lambda p: (p.span.start, p.span.end))


def tag_sentence(
    model: SpanTagger,
    tokens: list[str],
    descriptions: list[ClassDescription],
    mode: str,
    config: DecodingConfig,
) -> list[TypedSpanPrediction]:
    """Full pipeline for one sentence: encode, extract spans, infer classes."""
    if mode not in ("few-shot", "zero-shot"):
        raise ConfigError(f"unknown decoding mode {mode!r}")
    if not tokens:
        return []
    model.eval()
    with torch.no_grad():
        ids = tokenize(" ".join(tokens), model.vocab, model.config.encoder.max_len)
        embeddings = model.encode_sentence(ids)
        scores = model.token_scores(embeddings)
        cfg = replace(config, max_span_len=min(config.max_span_len, model.config.max_span_len))
        scored = extract_consensus_spans(scores, cfg)
        if not scored:
            return []
        logits = model.class_logits_for_spans(
            embeddings, [s.span for s in scored], descriptions
        )
        names = [d.name for d in descriptions]
        if mode == "few-shot":
            return decode_few_shot(scored, torch.sigmoid(logits), names, cfg)
        return decode_zero_shot(scored, logits, names, cfg)
