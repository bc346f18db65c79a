"""Span-level evaluation: exact-match P/R/F1, multi-run aggregation, sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import torch

from .classify import ClassDescription
from .data import Dataset
from .decoding import DecodingConfig, TypedSpanPrediction, tag_sentence
from .errors import ConfigError, DataError
from .model import SpanTagger
from .vocab import tokenize


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    per_class: dict[str, ClassMetrics] = field(default_factory=dict)
    # filled by aggregate_runs
    n_runs: int = 1
    precision_std: float = 0.0
    recall_std: float = 0.0
    f1_std: float = 0.0

    def to_dict(self) -> dict:
        d = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "n_runs": self.n_runs,
            "per_class": {
                name: vars(m).copy() for name, m in self.per_class.items()
            },
        }
        if self.n_runs > 1:
            d.update(
                precision_std=self.precision_std,
                recall_std=self.recall_std,
                f1_std=self.f1_std,
            )
        return d


def span_f1(predicted: Iterable, gold: Iterable) -> EvalReport:
    """Exact-match span F1 over hashable items whose last element is the class.

    Items are typically ``(start, end, class)`` tuples, or
    ``(sentence_idx, start, end, class)`` for corpus-level scoring. A
    boundary or class mismatch counts as both a false positive and a false
    negative.
    """
    pred_set = set(predicted)
    gold_set = set(gold)
    tp_set = pred_set & gold_set
    tp, fp, fn = len(tp_set), len(pred_set - gold_set), len(gold_set - pred_set)
    p, r, f1 = _prf(tp, fp, fn)

    labels = sorted({item[-1] for item in pred_set | gold_set})
    per_class = {}
    for label in labels:
        ltp = sum(1 for it in tp_set if it[-1] == label)
        lfp = sum(1 for it in pred_set - gold_set if it[-1] == label)
        lfn = sum(1 for it in gold_set - pred_set if it[-1] == label)
        lp, lr, lf = _prf(ltp, lfp, lfn)
        per_class[label] = ClassMetrics(lp, lr, lf, ltp, lfp, lfn)
    return EvalReport(p, r, f1, tp, fp, fn, per_class=per_class)


def predict_dataset(
    model: SpanTagger,
    dataset: Dataset,
    descriptions: list[ClassDescription],
    mode: str,
    config: DecodingConfig,
) -> list[list[TypedSpanPrediction]]:
    return [
        tag_sentence(model, sent.tokens, descriptions, mode, config)
        for sent in dataset.sentences
    ]


def evaluate_model(
    model: SpanTagger,
    dataset: Dataset,
    descriptions: list[ClassDescription],
    mode: str,
    config: DecodingConfig,
) -> EvalReport:
    """Corpus-level exact-match F1 of the full detect-and-classify pipeline."""
    predictions = predict_dataset(model, dataset, descriptions, mode, config)
    pred_items = [
        (idx,) + p.typed_tuple
        for idx, preds in enumerate(predictions)
        for p in preds
    ]
    gold_items = [
        (idx, sp.start, sp.end, sp.label)
        for idx, sent in enumerate(dataset.sentences)
        for sp in sent.spans
    ]
    return span_f1(pred_items, gold_items)


@dataclass
class GoldSpanReport:
    """Class-inference quality measured on gold spans (detection bypassed)."""

    accuracy: float
    n_spans: int
    report: EvalReport


def evaluate_class_inference_with_gold_spans(
    model: SpanTagger,
    dataset: Dataset,
    descriptions: list[ClassDescription],
    mode: str = "few-shot",
    config: DecodingConfig | None = None,
) -> GoldSpanReport:
    """Classify each gold span through the configured decode rule.

    Few-shot applies the per-class boundary (spans with no class above it
    stay unlabeled and count as misses); zero-shot assigns the softmax
    argmax to every span.
    """
    config = config or DecodingConfig()
    n_gold = sum(len(s.spans) for s in dataset.sentences)
    if n_gold == 0:
        raise DataError("no gold spans in dataset")
    names = [d.name for d in descriptions]
    model.eval()
    pred_items = []
    gold_items = []
    correct = 0
    with torch.no_grad():
        for idx, sent in enumerate(dataset.sentences):
            if not sent.spans:
                continue
            ids = tokenize(sent.text, model.vocab, model.config.encoder.max_len)
            embeddings = model.encode_sentence(ids)
            spans = [sp.span for sp in sent.spans]
            logits = model.class_logits_for_spans(embeddings, spans, descriptions)
            for row, gold_span in enumerate(sent.spans):
                gold_items.append((idx, gold_span.start, gold_span.end, gold_span.label))
                if mode == "zero-shot":
                    best = int(torch.argmax(logits[row]))
                    label = names[best]
                else:
                    probs = torch.sigmoid(logits[row])
                    best = int(torch.argmax(probs))
                    if float(probs[best]) <= config.class_boundary:
                        continue
                    label = names[best]
                pred_items.append((idx, gold_span.start, gold_span.end, label))
                if label == gold_span.label:
                    correct += 1
    return GoldSpanReport(
        accuracy=correct / n_gold,
        n_spans=n_gold,
        report=span_f1(pred_items, gold_items),
    )


def aggregate_runs(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean and population standard deviation of each metric across runs."""
    if not reports:
        raise ConfigError("aggregate_runs requires at least one report")

    def mean(xs):
        return sum(xs) / len(xs)

    def pstd(xs):
        m = mean(xs)
        return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))

    ps = [r.precision for r in reports]
    rs = [r.recall for r in reports]
    fs = [r.f1 for r in reports]
    labels = sorted({lbl for r in reports for lbl in r.per_class})
    per_class = {}
    for lbl in labels:
        ms = [r.per_class[lbl] for r in reports if lbl in r.per_class]
        per_class[lbl] = ClassMetrics(
            precision=mean([m.precision for m in ms]),
            recall=mean([m.recall for m in ms]),
            f1=mean([m.f1 for m in ms]),
            tp=sum(m.tp for m in ms),
            fp=sum(m.fp for m in ms),
            fn=sum(m.fn for m in ms),
        )
    return EvalReport(
        precision=mean(ps),
        recall=mean(rs),
        f1=mean(fs),
        tp=sum(r.tp for r in reports),
        fp=sum(r.fp for r in reports),
        fn=sum(r.fn for r in reports),
        per_class=per_class,
        n_runs=len(reports),
        precision_std=pstd(ps),
        recall_std=pstd(rs),
        f1_std=pstd(fs),
    )


def threshold_sweep(
    model: SpanTagger,
    dataset: Dataset,
    descriptions: list[ClassDescription],
    gammas: Sequence[float],
    config: DecodingConfig | None = None,
) -> list[tuple[float, float]]:
    """Zero-shot F1 at each joint-score threshold, for threshold selection plots."""
    if not len(gammas):
        raise ConfigError("threshold sweep requires a non-empty gamma grid")
    config = config or DecodingConfig()
    rows = []
    for gamma in gammas:
        report = evaluate_model(
            model, dataset, descriptions, "zero-shot", replace(config, gamma=float(gamma))
        )
        rows.append((float(gamma), report.f1))
    return rows
