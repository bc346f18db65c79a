"""Detection heads: span scoring identities, sampling, and loss normalization."""

import math
import random

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from spantag.detector import (
    DetectionHeads,
    SpanCandidateSets,
    TokenScores,
    batch_match_logits,
    match_loss,
    member_cumsum,
    negative_pool,
    negative_sample_count,
    sample_negative_spans,
    span_loss,
    span_match_logit,
    span_match_probability,
    start_end_labels,
    start_end_losses,
    token_probability,
)
from spantag.errors import ConfigError, DataError
from spantag.spans import Span, enumerate_spans


def scores_from(values: list[float] | torch.Tensor, **named) -> TokenScores:
    base = torch.as_tensor(values, dtype=torch.float64)
    parts = {k: named.get(k, base).to(torch.float64) for k in ("start", "end", "member")}
    return TokenScores(**{k: torch.as_tensor(v, dtype=torch.float64) for k, v in parts.items()})


def random_scores(n: int, seed: int = 0) -> TokenScores:
    g = torch.Generator().manual_seed(seed)
    mk = lambda: torch.randn(n, generator=g, dtype=torch.float64)
    return TokenScores(start=mk(), end=mk(), member=mk())


def test_token_scores_shape_check():
    with pytest.raises(ConfigError):
        TokenScores(torch.zeros(3), torch.zeros(3), torch.zeros(4))


def test_slice_sentence_requires_batched_scores():
    flat = random_scores(4)
    with pytest.raises(ConfigError):
        flat.slice_sentence(0, 2)
    batched = TokenScores(torch.zeros(2, 5), torch.zeros(2, 5), torch.ones(2, 5))
    row = batched.slice_sentence(1, 3)
    assert row.n_tokens == 3
    assert torch.all(row.member == 1)


def test_candidate_sets_must_be_disjoint():
    with pytest.raises(DataError):
        SpanCandidateSets(positives=(Span(0, 1),), negatives=(Span(0, 1),))


def test_detection_heads_are_bias_free_dot_products():
    torch.manual_seed(0)
    heads = DetectionHeads(8).double()
    emb = torch.randn(5, 8, dtype=torch.float64)
    out = heads(emb)
    assert torch.allclose(out.start, emb @ heads.w_start)
    assert out.start.shape == (5,)
    # batched input mirrors the leading shape
    batch = heads(emb.unsqueeze(0))
    assert batch.start.shape == (1, 5)


def test_score_tokens_rejects_width_mismatch():
    heads = DetectionHeads(8)
    with pytest.raises(ConfigError):
        heads(torch.zeros(3, 7))


def test_token_probability_is_sigmoid():
    assert token_probability(0.0).item() == pytest.approx(0.5)
    assert token_probability(100.0).item() == pytest.approx(1.0)


@given(n=st.integers(1, 8), seed=st.integers(0, 100))
def test_span_match_logit_equals_direct_sum(n, seed):
    """Cumsum shortcut must agree with naive summation for every span."""
    scores = random_scores(n, seed)
    cs = member_cumsum(scores)
    for span in enumerate_spans(n):
        direct = (
            scores.start[span.start]
            + scores.end[span.end]
            + scores.member[span.start : span.end + 1].sum()
        )
        assert torch.allclose(span_match_logit(span, scores), direct, atol=1e-12)
        assert torch.allclose(span_match_logit(span, scores, cs), direct, atol=1e-12)


def test_span_match_logit_bounds_check():
    with pytest.raises(DataError):
        span_match_logit(Span(0, 3), random_scores(3))


def test_span_match_probability_matches_logit():
    scores = random_scores(5, seed=3)
    span = Span(1, 3)
    p = span_match_probability(span, scores)
    assert p.item() == pytest.approx(torch.sigmoid(span_match_logit(span, scores)).item())


def test_batch_match_logits_agrees_with_single(seed=7):
    scores = random_scores(6, seed)
    spans = [Span(0, 0), Span(1, 4), Span(5, 5), Span(0, 5)]
    batch = batch_match_logits(spans, scores)
    for k, span in enumerate(spans):
        assert torch.allclose(batch[k], span_match_logit(span, scores))
    assert batch_match_logits([], scores).shape == (0,)


@given(
    n_tokens=st.integers(0, 40),
    n_gold=st.integers(0, 10),
    pool=st.integers(0, 200),
)
def test_negative_sample_count_formula(n_tokens, n_gold, pool):
    got = negative_sample_count(n_tokens, n_gold, pool)
    assert got == min(max(0, n_tokens - n_gold), pool)
    assert 0 <= got <= pool


def test_negative_pool_is_enumeration_minus_gold():
    gold = [Span(1, 2)]
    pool = negative_pool(4, gold, max_span_len=2)
    expected = [s for s in enumerate_spans(4, 2) if s != Span(1, 2)]
    assert pool == expected


@given(
    n_tokens=st.integers(1, 9),
    max_span_len=st.integers(1, 9),
    seed=st.integers(0, 1000),
    data=st.data(),
)
def test_sample_negative_spans_properties(n_tokens, max_span_len, seed, data):
    all_spans = enumerate_spans(n_tokens, max_span_len)
    gold = data.draw(
        st.lists(st.sampled_from(all_spans), max_size=min(3, len(all_spans)), unique=True)
    )
    sets = sample_negative_spans(n_tokens, gold, max_span_len, random.Random(seed))
    assert sets.positives == tuple(sorted(set(gold)))
    assert not set(sets.negatives) & set(gold)
    for s in sets.negatives:
        assert s.length <= max_span_len and s.end < n_tokens
    assert len(set(sets.negatives)) == len(sets.negatives)
    pool_size = len(all_spans) - len(set(gold))
    assert len(sets.negatives) == min(max(0, n_tokens - len(set(gold))), pool_size)


def test_sample_negative_spans_is_deterministic_per_seed():
    gold = [Span(0, 1)]
    a = sample_negative_spans(6, gold, 3, random.Random(5))
    b = sample_negative_spans(6, gold, 3, random.Random(5))
    assert a == b


def test_sample_negative_spans_input_validation():
    with pytest.raises(DataError):
        sample_negative_spans(0, [], 3, random.Random(0))
    with pytest.raises(ConfigError):
        sample_negative_spans(3, [], 0, random.Random(0))


def test_start_end_labels_mark_boundaries():
    y_start, y_end = start_end_labels(5, [Span(1, 3), Span(4, 4)])
    assert y_start.tolist() == [0, 1, 0, 0, 1]
    assert y_end.tolist() == [0, 0, 0, 1, 1]


def test_start_end_losses_zero_scores_give_ln2():
    """BCE with logits at 0 is ln 2 regardless of the labels."""
    scores = scores_from(torch.zeros(4))
    l_start, l_end = start_end_losses(scores, [Span(0, 2)])
    assert l_start.item() == pytest.approx(math.log(2), abs=1e-12)
    assert l_end.item() == pytest.approx(math.log(2), abs=1e-12)


def test_start_end_losses_match_manual_bce():
    scores = random_scores(5, seed=11)
    gold = [Span(1, 2)]
    y_start, y_end = start_end_labels(5, gold)
    p = torch.sigmoid(scores.start)
    manual = -(y_start * torch.log(p) + (1 - y_start) * torch.log(1 - p)).mean()
    l_start, _ = start_end_losses(scores, gold)
    assert l_start.item() == pytest.approx(manual.item(), abs=1e-10)


def test_match_loss_normalizes_by_token_count():
    """Denominator is N, not the number of candidates."""
    scores = scores_from(torch.zeros(4))
    sets = SpanCandidateSets(positives=(Span(0, 1),), negatives=(Span(2, 3), Span(3, 3)))
    # all logits are 0: each candidate contributes ln 2, divided by N=4
    expected = 3 * math.log(2) / 4
    assert match_loss(sets, scores).item() == pytest.approx(expected, abs=1e-12)


def test_match_loss_stays_finite_when_saturated():
    scores = scores_from(torch.full((3,), 60.0))
    sets = SpanCandidateSets(positives=(), negatives=(Span(0, 2),))
    loss = match_loss(sets, scores)
    assert math.isfinite(loss.item())
    assert loss.item() > 0


def test_span_loss_total_is_exact_sum():
    losses = span_loss(0.25, 0.5, 0.125)
    assert losses.total == losses.start + losses.end + losses.match == 0.875
