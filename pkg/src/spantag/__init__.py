"""Span-based entity tagging with natural-language class descriptions.

A tagger has two halves: a class-agnostic span detector (start, end, and
membership scores over tokens) and a class inference head that matches span
representations against encoded class descriptions. Because classes are
defined by text rather than by a fixed softmax layer, the same trained model
can label classes it never saw during training.
"""

from .checkpoint import LoadedCheckpoint, load_checkpoint, save_checkpoint
from .classify import ClassDescription, InferenceHeads
from .data import (
    Dataset,
    Sentence,
    read_class_descriptions,
    read_conll_bio,
    write_bio,
    write_class_descriptions,
    write_predictions_jsonl,
)
from .decoding import (
    DecodingConfig,
    TypedSpanPrediction,
    decode_few_shot,
    decode_zero_shot,
    extract_consensus_spans,
    tag_sentence,
)
from .detector import DetectionHeads, TokenScores, sample_negative_spans
from .encoder import EncoderConfig, TokenEncoder
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    ParseError,
    SpantagError,
)
from .evaluation import (
    EvalReport,
    aggregate_runs,
    evaluate_model,
    predict_dataset,
    span_f1,
    threshold_sweep,
)
from .model import ModelConfig, SpanTagger
from .spans import Span, TypedSpan, enumerate_spans
from .synthetic import SyntheticSpec, generate, write_corpus
from .training import (
    EpisodeSpec,
    TrainConfig,
    TrainResult,
    joint_loss,
    sample_k_shot,
    train,
)
from .vocab import Vocabulary, build_vocab

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ClassDescription",
    "ConfigError",
    "DataError",
    "Dataset",
    "DecodingConfig",
    "DetectionHeads",
    "EncoderConfig",
    "EpisodeSpec",
    "EvalReport",
    "InferenceHeads",
    "LoadedCheckpoint",
    "ModelConfig",
    "ParseError",
    "Sentence",
    "Span",
    "SpanTagger",
    "SpantagError",
    "SyntheticSpec",
    "TokenEncoder",
    "TokenScores",
    "TrainConfig",
    "TrainResult",
    "TypedSpan",
    "TypedSpanPrediction",
    "Vocabulary",
    "aggregate_runs",
    "build_vocab",
    "decode_few_shot",
    "decode_zero_shot",
    "enumerate_spans",
    "evaluate_model",
    "extract_consensus_spans",
    "generate",
    "joint_loss",
    "load_checkpoint",
    "predict_dataset",
    "read_class_descriptions",
    "read_conll_bio",
    "sample_k_shot",
    "sample_negative_spans",
    "save_checkpoint",
    "span_f1",
    "tag_sentence",
    "threshold_sweep",
    "train",
    "write_bio",
    "write_class_descriptions",
    "write_corpus",
    "write_predictions_jsonl",
]
