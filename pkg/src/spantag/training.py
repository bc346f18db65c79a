"""Joint training loop for span detection and class inference.

The total objective is the unweighted sum of the boundary-detection loss and
the class-inference loss.  Optimization uses AdamW with a linear warmup and
decay schedule, global gradient-norm clipping, and per-epoch redraws of the
sampled negative spans.
"""

from __future__ import annotations

import csv
import math
import random
import sys
import time
import warnings
from dataclasses import dataclass, fields, replace
from typing import Callable, Iterable, Sequence

import torch
from torch.nn import functional as F

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .classify import ClassDescription, entity_loss
from .data import Dataset
from .detector import (
    SpanCandidateSets,
    match_loss,
    negative_pool,
    negative_sample_count,
    start_end_labels,
)
from .encoder import EncoderConfig
from .errors import ConfigError, DataError
from .model import ModelConfig, SpanTagger
from .spans import Span
from .vocab import UNK_ID, Vocabulary, build_vocab, encode_tokens

# Hyperparameter grids used for the reference-scale configuration.
PAPER_LR_GRID = (6e-6, 1e-5, 2e-5)
PAPER_BATCH_SIZES = (8, 16)


@dataclass
class TrainConfig:
    """Optimization hyperparameters.

    ``negative_sampling`` selects between drawing ``N - n_gold`` negative
    spans per sentence ("ratio") and scoring every candidate span ("all").
    """

    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 50
    warmup_fraction: float = 0.01
    max_grad_norm: float = 1.0
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    negative_sampling: str = "ratio"
    entity_loss_on_negatives: bool = True
    # chance of replacing an input token with the unknown id; forces the
    # detector to use context instead of memorizing entity words
    word_dropout: float = 0.1
    # single-threaded math keeps reduction order, and so checkpoints, stable
    num_threads: int | None = 1

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must lie in [0, 1)")
        if self.max_grad_norm <= 0:
            raise ConfigError("max_grad_norm must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError("betas must be two values in [0, 1)")
        if self.negative_sampling not in ("ratio", "all"):
            raise ConfigError(
                f"negative_sampling must be 'ratio' or 'all', got {self.negative_sampling!r}"
            )
        if not 0.0 <= self.word_dropout < 1.0:
            raise ConfigError("word_dropout must lie in [0, 1)")
        if self.num_threads is not None and self.num_threads < 1:
            raise ConfigError("num_threads must be None or at least 1")

    @classmethod
    def paper_preset(
        cls, learning_rate: float = 2e-5, batch_size: int = 16
    ) -> "TrainConfig":
        """Reference-scale settings: 50 epochs, 1% warmup, clip norm 1.0."""
        if learning_rate not in PAPER_LR_GRID:
            warnings.warn(
                f"learning rate {learning_rate} is outside the reference grid {PAPER_LR_GRID}"
            )
        if batch_size not in PAPER_BATCH_SIZES:
            warnings.warn(
                f"batch size {batch_size} is outside the reference grid {PAPER_BATCH_SIZES}"
            )
        return cls(learning_rate=learning_rate, batch_size=batch_size)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "warmup_fraction": self.warmup_fraction,
            "max_grad_norm": self.max_grad_norm,
            "weight_decay": self.weight_decay,
            "betas": list(self.betas),
            "seed": self.seed,
            "negative_sampling": self.negative_sampling,
            "entity_loss_on_negatives": self.entity_loss_on_negatives,
            "word_dropout": self.word_dropout,
            "num_threads": self.num_threads,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown training option(s): {sorted(unknown)}")
        kwargs = dict(data)
        if "betas" in kwargs:
            kwargs["betas"] = tuple(kwargs["betas"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def load_train_setup(path: str) -> tuple[TrainConfig, ModelConfig]:
    """Read a TOML config file.

    Top-level keys map onto TrainConfig.  An optional ``[model]`` table maps
    onto ModelConfig and an optional ``[encoder]`` table onto EncoderConfig.
    Unknown keys raise ConfigError rather than being silently dropped.
    """
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    model_raw = raw.pop("model", {})
    encoder_raw = raw.pop("encoder", {})
    if not isinstance(model_raw, dict) or not isinstance(encoder_raw, dict):
        raise ConfigError("[model] and [encoder] must be tables")
    train_cfg = TrainConfig.from_dict(raw)

    enc_known = {f.name for f in fields(EncoderConfig)}
    enc_unknown = set(encoder_raw) - enc_known
    if enc_unknown:
        raise ConfigError(f"unknown encoder option(s): {sorted(enc_unknown)}")
    encoder_cfg = EncoderConfig(**encoder_raw)

    model_known = {f.name for f in fields(ModelConfig)} - {"encoder"}
    model_unknown = set(model_raw) - model_known
    if model_unknown:
        raise ConfigError(f"unknown model option(s): {sorted(model_unknown)}")
    model_cfg = ModelConfig(encoder=encoder_cfg, **model_raw)
    model_cfg.validate()
    return train_cfg, model_cfg


def lr_multiplier(step: int, total_steps: int, warmup_fraction: float) -> float:
    """Linear warmup then linear decay to zero, evaluated at a 0-based step.

    The multiplier climbs from 0 at step 0 to 1 at the end of warmup, then
    falls linearly to 0 at ``total_steps``.
    """
    if total_steps <= 0:
        raise ConfigError("total_steps must be positive")
    if step < 0 or step > total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    warmup_steps = math.ceil(warmup_fraction * total_steps)
    if step < warmup_steps:
        return step / warmup_steps
    if warmup_steps == total_steps:
        return 1.0
    return (total_steps - step) / (total_steps - warmup_steps)


def global_grad_norm(grads: Iterable[torch.Tensor]) -> float:
    """Global L2 norm across a list of gradient tensors."""
    total = 0.0
    for g in grads:
        total += float(g.detach().pow(2).sum())
    return math.sqrt(total)


def clip_gradients(grads: Sequence[torch.Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm.

    Returns the pre-clip norm.  Direction is preserved: every tensor is
    scaled by the same factor.
    """
    if max_norm <= 0:
        raise ConfigError("max_norm must be positive")
    grads = [g for g in grads if g is not None]
    norm = global_grad_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        with torch.no_grad():
            for g in grads:
                g.mul_(scale)
    return norm


@dataclass(frozen=True)
class SentenceExample:
    """A tokenized sentence with everything the loss needs precomputed.

    ``gold`` holds the unique span boundaries, ``pool`` the negative
    candidates (enumeration order, gold excluded), and ``y_start``/``y_end``
    the binary boundary labels.
    """

    ids: torch.Tensor
    spans: tuple  # TypedSpan tuple
    n_tokens: int
    gold: tuple  # Span tuple, sorted
    pool: tuple  # Span tuple
    y_start: torch.Tensor
    y_end: torch.Tensor


def prepare_examples(
    dataset: Dataset, vocab: Vocabulary, max_len: int, max_span_len: int
) -> list[SentenceExample]:
    """Tokenize every sentence once; spans past the truncation point are dropped."""
    examples = []
    for sent in dataset.sentences:
        ids = encode_tokens(sent.tokens, vocab, max_len)
        n = len(ids)
        kept = tuple(s for s in sent.spans if s.end < n)
        if len(kept) < len(sent.spans):
            warnings.warn(
                f"dropped {len(sent.spans) - len(kept)} gold span(s) cut off "
                f"by truncation to {max_len} tokens"
            )
        gold = tuple(sorted({s.span for s in kept}))
        pool = tuple(negative_pool(n, gold, max_span_len))
        y_start, y_end = start_end_labels(n, gold)
        examples.append(
            SentenceExample(
                ids=torch.tensor(ids, dtype=torch.long),
                spans=kept,
                n_tokens=n,
                gold=gold,
                pool=pool,
                y_start=y_start,
                y_end=y_end,
            )
        )
    return examples


def pad_batch(examples: Sequence[SentenceExample]) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad id sequences to a common length; returns (ids, mask) of shape (B, L)."""
    longest = max(e.n_tokens for e in examples)
    ids = torch.zeros((len(examples), longest), dtype=torch.long)
    mask = torch.zeros((len(examples), longest), dtype=torch.bool)
    for row, ex in enumerate(examples):
        ids[row, : ex.n_tokens] = ex.ids
        mask[row, : ex.n_tokens] = True
    return ids, mask


@dataclass
class JointLossResult:
    """Loss components kept as graph tensors so callers can backpropagate."""

    total: torch.Tensor
    l_start: torch.Tensor
    l_end: torch.Tensor
    l_match: torch.Tensor
    l_span: torch.Tensor
    l_entity: torch.Tensor

    def floats(self) -> dict[str, float]:
        return {
            name: float(getattr(self, name).detach())
            for name in ("l_start", "l_end", "l_match", "l_span", "l_entity", "total")
        }


def _candidate_sets(
    example: SentenceExample, config: TrainConfig, rng: random.Random
) -> SpanCandidateSets:
    if config.negative_sampling == "all":
        negatives = example.pool
    else:
        take = negative_sample_count(
            example.n_tokens, len(example.gold), len(example.pool)
        )
        negatives = tuple(rng.sample(example.pool, take)) if take else ()
    return SpanCandidateSets(positives=example.gold, negatives=negatives)


def joint_loss(
    model: SpanTagger,
    examples: Sequence[SentenceExample],
    descriptions: Sequence[ClassDescription],
    config: TrainConfig,
    rng: random.Random,
) -> JointLossResult:
    """Joint objective over a batch of sentences.

    Detection losses are averaged over sentences.  The class-inference loss
    averages over every scored span in the batch, positives and (if enabled)
    sampled negatives alike; negatives carry an all-zero class target.
    """
    if not examples:
        raise DataError("cannot compute a loss over an empty batch")
    class_index = {d.name: i for i, d in enumerate(descriptions)}
    n_classes = len(descriptions)

    ids, mask = pad_batch(examples)
    if model.training and config.word_dropout > 0.0:
        for row, ex in enumerate(examples):
            for t in range(ex.n_tokens):
                if rng.random() < config.word_dropout:
                    ids[row, t] = UNK_ID
    embeddings = model.context_encoder(ids, mask)
    scores = model.token_scores(embeddings)

    zero = embeddings.new_zeros(())
    l_start = zero.clone()
    l_end = zero.clone()
    l_match = zero.clone()
    entity_gold: list[int | None] = []
    pooled_rows: list[torch.Tensor] = []

    for row, ex in enumerate(examples):
        n = ex.n_tokens
        row_scores = scores.slice_sentence(row, n)
        l_start = l_start + F.binary_cross_entropy_with_logits(
            row_scores.start, ex.y_start
        )
        l_end = l_end + F.binary_cross_entropy_with_logits(row_scores.end, ex.y_end)
        sets = _candidate_sets(ex, config, rng)
        l_match = l_match + match_loss(sets, row_scores)

        scored: list[tuple[Span, int | None]] = [
            (s.span, class_index[s.label]) for s in ex.spans
        ]
        if config.entity_loss_on_negatives:
            scored.extend((neg, None) for neg in sets.negatives)
        if scored:
            emb = embeddings[row, :n]
            csum = torch.cat([emb.new_zeros((1, emb.shape[1])), emb.cumsum(dim=0)])
            i = torch.tensor([s.start for s, _ in scored], dtype=torch.long)
            j = torch.tensor([s.end for s, _ in scored], dtype=torch.long)
            lengths = (j - i + 1).to(emb.dtype).unsqueeze(1)
            pooled_rows.append((csum[j + 1] - csum[i]) / lengths)
            entity_gold.extend(g for _, g in scored)

    n_sent = len(examples)
    l_start = l_start / n_sent
    l_end = l_end / n_sent
    l_match = l_match / n_sent
    l_span = l_start + l_end + l_match

    if pooled_rows and n_classes:
        mentions = torch.cat(pooled_rows) @ model.inference_heads.w_entity.T
        matrices = model.description_matrices(descriptions)
        logits = model.inference_heads.class_logits(mentions, matrices)
        l_entity = entity_loss(logits, entity_gold, n_classes)
    else:
        l_entity = zero.clone()

    total = l_span + l_entity
    return JointLossResult(
        total=total,
        l_start=l_start,
        l_end=l_end,
        l_match=l_match,
        l_span=l_span,
        l_entity=l_entity,
    )


@dataclass(frozen=True)
class StepRecord:
    """Loss components captured after one optimizer step."""

    epoch: int
    step: int
    l_start: float
    l_end: float
    l_match: float
    l_span: float
    l_entity: float
    total: float
    lr: float
    grad_norm: float


LOSS_CSV_COLUMNS = ("epoch", "step", "l_start", "l_end", "l_match", "l_entity", "total")


def write_loss_csv(history: Sequence[StepRecord], path: str) -> None:
    """Write the per-step loss log with a fixed column set."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_CSV_COLUMNS)
        for rec in history:
            writer.writerow(
                [
                    rec.epoch,
                    rec.step,
                    repr(rec.l_start),
                    repr(rec.l_end),
                    repr(rec.l_match),
                    repr(rec.l_entity),
                    repr(rec.total),
                ]
            )


@dataclass
class TrainResult:
    model: SpanTagger
    history: list[StepRecord]
    vocab: Vocabulary
    train_config: TrainConfig

    def epoch_mean_totals(self) -> list[float]:
        sums: dict[int, list[float]] = {}
        for rec in self.history:
            sums.setdefault(rec.epoch, []).append(rec.total)
        return [sum(v) / len(v) for _, v in sorted(sums.items())]


def _batches(order: Sequence[int], batch_size: int) -> Iterable[list[int]]:
    for i in range(0, len(order), batch_size):
        yield list(order[i : i + batch_size])


def train(
    dataset: Dataset,
    descriptions: Sequence[ClassDescription],
    config: TrainConfig,
    model: SpanTagger | None = None,
    vocab: Vocabulary | None = None,
    model_config: ModelConfig | None = None,
    progress: Callable[[int, int, StepRecord], None] | None = None,
    stop_after_seconds: float | None = None,
) -> TrainResult:
    """Train a tagger from scratch (or continue on a supplied model).

    Every class appearing in the dataset must come with a description.
    When ``stop_after_seconds`` is set, training stops at the first epoch
    boundary after the wall-clock budget is spent.
    """
    config.validate()
    dataset.validate()
    if config.num_threads is not None:
        torch.set_num_threads(config.num_threads)
    described = {d.name for d in descriptions}
    missing = sorted(set(dataset.classes) - described)
    if missing:
        raise ConfigError(f"no description provided for class(es): {missing}")

    if model is None:
        if vocab is None:
            corpus = [" ".join(s.tokens) for s in dataset.sentences]
            corpus.extend(d.text for d in descriptions)
            corpus.extend(d.name for d in descriptions)
            vocab = build_vocab(corpus)
        if model_config is None:
            model_config = ModelConfig()
        model_config = replace(model_config, init_seed=config.seed)
        model = SpanTagger(vocab, model_config)
    else:
        vocab = model.vocab

    torch.manual_seed(config.seed)
    examples = prepare_examples(
        dataset, vocab, model.config.encoder.max_len, model.config.max_span_len
    )
    params = list(model.trainable_parameters())
    optimizer = torch.optim.AdamW(
        params,
        lr=config.learning_rate,
        betas=config.betas,
        weight_decay=config.weight_decay,
    )

    n = len(examples)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    history: list[StepRecord] = []
    order = list(range(n))
    global_step = 0
    started = time.monotonic()

    for epoch in range(1, config.epochs + 1):
        if stop_after_seconds is not None and time.monotonic() - started >= stop_after_seconds:
            break
        epoch_rng = random.Random(f"{config.seed}:{epoch}")
        epoch_rng.shuffle(order)
        model.train()
        for batch_ids in _batches(order, config.batch_size):
            mult = lr_multiplier(global_step, total_steps, config.warmup_fraction)
            lr = config.learning_rate * mult
            for group in optimizer.param_groups:
                group["lr"] = lr
            result = joint_loss(
                model,
                [examples[i] for i in batch_ids],
                descriptions,
                config,
                epoch_rng,
            )
            optimizer.zero_grad(set_to_none=True)
            result.total.backward()
            grads = [p.grad for p in params if p.grad is not None]
            norm = clip_gradients(grads, config.max_grad_norm)
            optimizer.step()
            vals = result.floats()
            record = StepRecord(
                epoch=epoch,
                step=global_step,
                l_start=vals["l_start"],
                l_end=vals["l_end"],
                l_match=vals["l_match"],
                l_span=vals["l_span"],
                l_entity=vals["l_entity"],
                total=vals["total"],
                lr=lr,
                grad_norm=norm,
            )
            history.append(record)
            if progress is not None:
                progress(epoch, global_step, record)
            global_step += 1

    model.eval()
    return TrainResult(model=model, history=history, vocab=vocab, train_config=config)


@dataclass(frozen=True)
class EpisodeSpec:
    """K-shot episode layout: K support sentences per entity class."""

    k: int
    classes: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be at least 1")


def sample_k_shot(
    dataset: Dataset, spec: EpisodeSpec, rng: random.Random
) -> Dataset:
    """Draw K sentences per class, deduplicated across classes.

    Raises DataError naming the class when the corpus cannot supply K
    distinct sentences containing it.
    """
    spec.validate()
    classes = spec.classes or tuple(dataset.classes)
    chosen: list[int] = []
    chosen_set: set[int] = set()
    for cls in classes:
        candidates = [
            i
            for i, s in enumerate(dataset.sentences)
            if any(sp.label == cls for sp in s.spans)
        ]
        if len(candidates) < spec.k:
            raise DataError(
                f"class {cls!r} appears in only {len(candidates)} sentence(s), "
                f"cannot sample {spec.k}"
            )
        picked = rng.sample(candidates, spec.k)
        for idx in picked:
            if idx not in chosen_set:
                chosen_set.add(idx)
                chosen.append(idx)
    return dataset.subset(sorted(chosen), split="support")


@dataclass
class GradCheckResult:
    """Worst-case relative disagreement between analytic and numerical gradients."""

    max_rel_error: float
    worst_param: str
    per_param: dict[str, float]
    frozen_grad_absent: bool


def gradient_check(
    loss_fn: Callable[[], torch.Tensor],
    named_params: Sequence[tuple[str, torch.nn.Parameter]],
    frozen_params: Sequence[torch.nn.Parameter] = (),
    epsilon: float = 1e-5,
    samples_per_param: int = 8,
    rng: random.Random | None = None,
) -> GradCheckResult:
    """Compare autograd gradients against central finite differences.

    ``loss_fn`` must recompute the loss from current parameter values on
    every call.  A handful of coordinates per tensor is probed; the relative
    error uses a unit floor so near-zero gradients are compared absolutely.
    """
    rng = rng or random.Random(0)
    for _, p in named_params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    # frozen parameters must come out of the backward pass untouched
    frozen_ok = all(not p.requires_grad and p.grad is None for p in frozen_params)
    grads = [p.grad for _, p in named_params]

    per_param: dict[str, float] = {}
    worst = 0.0
    worst_name = ""
    for (name, param), grad in zip(named_params, grads):
        if grad is None:
            grad = torch.zeros_like(param)
        flat = param.detach().view(-1)
        gflat = grad.view(-1)
        n_coords = min(samples_per_param, flat.numel())
        coords = rng.sample(range(flat.numel()), n_coords)
        local_worst = 0.0
        for c in coords:
            original = float(flat[c])
            with torch.no_grad():
                flat[c] = original + epsilon
                f_plus = float(loss_fn())
                flat[c] = original - epsilon
                f_minus = float(loss_fn())
                flat[c] = original
            numerical = (f_plus - f_minus) / (2 * epsilon)
            analytic = float(gflat[c])
            rel = abs(analytic - numerical) / max(1.0, abs(analytic), abs(numerical))
            local_worst = max(local_worst, rel)
        per_param[name] = local_worst
        if local_worst >= worst:
            worst = local_worst
            worst_name = name
    for _, p in named_params:
        p.grad = None
    return GradCheckResult(
        max_rel_error=worst,
        worst_param=worst_name,
        per_param=per_param,
        frozen_grad_absent=frozen_ok,
    )


def run_joint_gradient_check(
    seed: int = 0,
    n_sentences: int = 4,
    epsilon: float = 1e-5,
    samples_per_param: int = 6,
) -> GradCheckResult:
    """Gradient check of the joint loss on a small generated batch.

    Dropout is disabled so the loss is a deterministic function of the
    weights, which central differences require.
    """
    from .synthetic import (
        SyntheticSpec,
        class_descriptions,
        generate,
        vocabulary_tokens,
    )

    spec = SyntheticSpec(seed=seed, n_train=max(n_sentences, 1), n_dev=1, n_test=1)
    dataset = generate(spec)["train"].subset(range(n_sentences))
    descriptions = class_descriptions(spec)
    vocab = Vocabulary(vocabulary_tokens(spec))
    encoder_cfg = EncoderConfig(
        embed_dim=32, n_layers=2, n_heads=4, ffn_dim=64,
        dropout=0.0, max_len=64, max_desc_len=32,
    )
    model_cfg = ModelConfig(
        encoder=encoder_cfg, attn_dim=48, attn_heads=4, attn_dropout=0.0,
        init_seed=seed,
    )
    model = SpanTagger(vocab, model_cfg)
    model.eval()
    config = TrainConfig(seed=seed)
    examples = prepare_examples(
        dataset, vocab, encoder_cfg.max_len, model_cfg.max_span_len
    )

    def loss_fn() -> torch.Tensor:
        rng = random.Random(seed)
        return joint_loss(model, examples, descriptions, config, rng).total

    named = list(model.named_trainable_parameters())
    frozen = list(model.description_encoder.parameters())
    return gradient_check(
        loss_fn,
        named,
        frozen,
        epsilon=epsilon,
        samples_per_param=samples_per_param,
    )
