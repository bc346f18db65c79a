"""Shared fixtures: tiny deterministic models and corpora for fast tests."""

from __future__ import annotations

import pytest
import torch
from hypothesis import settings

from spantag.classify import ClassDescription
from spantag.data import Dataset, Sentence
from spantag.encoder import EncoderConfig
from spantag.model import ModelConfig, SpanTagger
from spantag.spans import TypedSpan
from spantag.vocab import Vocabulary

# torch ops make per-example timing noisy; disable the deadline globally.
settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

torch.set_num_threads(1)

TOY_TOKENS = (
    "the", "a", "cat", "dog", "fox", "oak", "fern", "moss",
    "ran", "grew", "sat", "today", "quietly", "small", "furry", "green",
    "leafy", "animal", "plant", "creature",
)


def tiny_encoder_config(**overrides) -> EncoderConfig:
    base = dict(
        embed_dim=16, n_layers=1, n_heads=2, ffn_dim=32,
        dropout=0.0, max_len=32, max_desc_len=16,
    )
    base.update(overrides)
    return EncoderConfig(**base)


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(
        encoder=tiny_encoder_config(),
        attn_heads=2, attn_dropout=0.0, max_span_len=4, init_seed=0,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def toy_vocab() -> Vocabulary:
    return Vocabulary(TOY_TOKENS)


@pytest.fixture
def tiny_model(toy_vocab) -> SpanTagger:
    return SpanTagger(toy_vocab, tiny_model_config())


@pytest.fixture
def toy_descriptions() -> list[ClassDescription]:
    return [
        ClassDescription("animal", "a furry creature such as a cat dog or fox"),
        ClassDescription("plant", "a green leafy thing such as an oak fern or moss"),
    ]


def build_toy_dataset() -> Dataset:
    sentences = [
        Sentence(["the", "cat", "sat", "today"], [TypedSpan(1, 1, "animal")]),
        Sentence(["a", "small", "oak", "grew"], [TypedSpan(1, 2, "plant")]),
        Sentence(["the", "furry", "dog", "ran", "quietly"], [TypedSpan(1, 2, "animal")]),
        Sentence(["moss", "grew"], [TypedSpan(0, 0, "plant")]),
        Sentence(["today", "the", "fox", "ran"], [TypedSpan(2, 2, "animal")]),
        Sentence(["the", "fern", "sat"], [TypedSpan(1, 1, "plant")]),
    ]
    return Dataset(sentences, classes=["animal", "plant"], split="train").validate()


@pytest.fixture
def toy_dataset() -> Dataset:
    return build_toy_dataset()


TINY_TRAIN_TOML = """
epochs = 3
learning_rate = 0.001
batch_size = 8
seed = 0
word_dropout = 0.0

[model]
max_span_len = 4
attn_heads = 2
attn_dropout = 0.0

[encoder]
embed_dim = 16
n_layers = 1
n_heads = 2
ffn_dim = 32
dropout = 0.0
max_len = 32
max_desc_len = 16
"""
