"""The full tagger: encoders, detection heads, and inference heads in one module.

Parameters live in float64. Desk-scale models are small enough that double
precision costs nothing, and it makes finite-difference gradient checks and
byte-exact checkpoint reproducibility straightforward.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import torch
from torch import nn

from .classify import ClassDescription, InferenceHeads
from .detector import DetectionHeads, TokenScores, score_tokens
from .encoder import EncoderConfig, TokenEncoder, frozen_copy
from .errors import ConfigError
from .vocab import Vocabulary, tokenize


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    attn_dim: int | None = None  # None: use the encoder width
    attn_heads: int = 4
    attn_dropout: float = 0.2
    use_attention: bool = True
    max_span_len: int = 10
    init_seed: int = 0

    def validate(self) -> None:
        self.encoder.validate()
        if self.max_span_len < 1:
            raise ConfigError(f"max_span_len must be >= 1, got {self.max_span_len}")
        if self.attn_dim is not None and self.attn_dim < 1:
            raise ConfigError(f"attn_dim must be >= 1, got {self.attn_dim}")
        if not 0.0 <= self.attn_dropout < 1.0:
            raise ConfigError(f"attn_dropout must be in [0, 1), got {self.attn_dropout}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["encoder"] = self.encoder.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig.from_dict(d["encoder"])
        return cls(**d)


class SpanTagger(nn.Module):
    """Span detector + class-inference model over a shared vocabulary.

    The description encoder starts as an exact copy of the context encoder's
    initial weights and stays frozen, so description embeddings live in a
    fixed space; its outputs are cached per (class name, description text).
    """

    def __init__(self, vocab: Vocabulary, config: ModelConfig | None = None):
        super().__init__()
        self.vocab = vocab
        self.config = config or ModelConfig()
        self.config.validate()
        torch.manual_seed(self.config.init_seed)
        enc = self.config.encoder
        self.context_encoder = TokenEncoder(len(vocab), enc)
        self.detection_heads = DetectionHeads(enc.embed_dim)
        self.inference_heads = InferenceHeads(
            enc.embed_dim,
            attn_dim=self.config.attn_dim,
            n_heads=self.config.attn_heads,
            dropout=self.config.attn_dropout,
            use_attention=self.config.use_attention,
        )
        self.double()
        self.description_encoder = frozen_copy(self.context_encoder)
        self._description_cache: dict[tuple[str, str], torch.Tensor] = {}
        self._cache_lock = threading.Lock()

    # nn.Module.train() cascades into children; the description encoder
    # must never leave eval mode or re-enable dropout.
    def train(self, mode: bool = True) -> "SpanTagger":
        super().train(mode)
        self.description_encoder.eval()
        return self

    @property
    def embed_dim(self) -> int:
        return self.config.encoder.embed_dim

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def named_trainable_parameters(self):
        return [(n, p) for n, p in self.named_parameters() if p.requires_grad]

    def encode_ids(self, ids: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        """Contextual embeddings for a padded id batch (B, L) -> (B, L, h)."""
        return self.context_encoder(ids, mask)

    def encode_sentence(self, ids: list[int] | torch.Tensor) -> torch.Tensor:
        return self.context_encoder.encode_one(ids)

    def token_scores(self, embeddings: torch.Tensor) -> TokenScores:
        return score_tokens(embeddings, self.detection_heads)

    def description_matrix(self, description: ClassDescription) -> torch.Tensor:
        """Frozen-encoder embedding matrix (K, h) for one class description.

        Cached: the encoder is frozen, so recomputation is guaranteed to
        return bit-identical values. Safe for concurrent readers.
        """
        key = (description.name, description.text)
        cached = self._description_cache.get(key)
        if cached is not None:
            return cached
        with self._cache_lock:
            cached = self._description_cache.get(key)
            if cached is not None:
                return cached
            ids = tokenize(description.text, self.vocab, self.config.encoder.max_desc_len)
            with torch.no_grad():
                matrix = self.description_encoder.encode_one(ids)
            self._description_cache[key] = matrix
            return matrix

    def description_matrices(self, descriptions: list[ClassDescription]) -> list[torch.Tensor]:
        return [self.description_matrix(d) for d in descriptions]

    def clear_description_cache(self) -> None:
        with self._cache_lock:
            self._description_cache.clear()

    def class_logits_for_spans(
        self,
        embeddings: torch.Tensor,
        spans,
        descriptions: list[ClassDescription],
    ) -> torch.Tensor:
        """Raw class-matching scores (M, C) for spans of one sentence."""
        mentions = self.inference_heads.mentions(embeddings, list(spans))
        return self.inference_heads.class_logits(mentions, self.description_matrices(descriptions))
