"""Datasets and file formats: BIO-tagged corpora and class-description JSON.

The interchange corpus format is CoNLL-style BIO text: one ``token tag``
pair per line (tab or space separated), blank line between sentences.
Only flat, non-overlapping gold spans are representable.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .classify import ClassDescription
from .errors import DataError, ParseError
from .spans import TypedSpan


@dataclass
class Sentence:
    tokens: list[str]
    spans: list[TypedSpan] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass
class Dataset:
    sentences: list[Sentence]
    classes: list[str] = field(default_factory=list)
    split: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    def validate(self) -> "Dataset":
        """Check bounds, class membership, and flatness; raises on violation."""
        class_set = set(self.classes)
        if len(class_set) != len(self.classes):
            raise DataError("duplicate class names in dataset class list")
        for idx, sent in enumerate(self.sentences):
            if not sent.tokens:
                raise DataError(f"sentence {idx} is empty")
            ordered = sorted(sent.spans, key=lambda s: (s.start, s.end))
            prev_end = -1
            for span in ordered:
                if span.end >= len(sent.tokens):
                    raise DataError(
                        f"sentence {idx}: span ({span.start}, {span.end}) out of "
                        f"bounds for {len(sent.tokens)} tokens"
                    )
                if span.label not in class_set:
                    raise DataError(
                        f"sentence {idx}: span class {span.label!r} not in the "
                        f"dataset class set"
                    )
                if span.start <= prev_end:
                    raise DataError(f"sentence {idx}: overlapping gold spans")
                prev_end = span.end
        return self

    def classes_present(self) -> list[str]:
        seen = []
        for sent in self.sentences:
            for span in sent.spans:
                if span.label not in seen:
                    seen.append(span.label)
        return seen

    def sentences_with_class(self, label: str) -> list[int]:
        return [
            i
            for i, sent in enumerate(self.sentences)
            if any(sp.label == label for sp in sent.spans)
        ]

    def subset(self, indices, split: str = "") -> "Dataset":
        return Dataset(
            sentences=[self.sentences[i] for i in indices],
            classes=list(self.classes),
            split=split or self.split,
        )


def _parse_tag(tag: str, line_no: int) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in ("B", "I"):
        return tag[0], tag[2:]
    raise ParseError(f"malformed BIO tag {tag!r}", line=line_no)


def _tags_to_spans(tags: list[tuple[str, str | None]], first_line: int) -> list[TypedSpan]:
    spans: list[TypedSpan] = []
    start = None
    label = None
    for i, (kind, cls) in enumerate(tags):
        if kind == "I" and (start is None or cls != label):
            # orphan continuation: repair as a span begin
            warnings.warn(
                f"line {first_line + i}: I-{cls} without a preceding B-{cls}; treating as B-{cls}",
                stacklevel=3,
            )
            kind = "B"
        if kind in ("O", "B") and start is not None:
            spans.append(TypedSpan(start, i - 1, label))
            start, label = None, None
        if kind == "B":
            start, label = i, cls
    if start is not None:
        spans.append(TypedSpan(start, len(tags) - 1, label))
    return spans


def read_conll_bio(path: str | Path, lowercase: bool = True, split: str = "") -> Dataset:
    """Parse a BIO file into a dataset.

    Lines are ``token<sep>tag`` with sep a tab or spaces; extra middle
    columns are ignored (token is the first field, tag the last). An I-tag
    with no live span of the same class is repaired to a B-tag with a
    warning. Tokens are case-folded unless ``lowercase=False``.
    """
    sentences: list[Sentence] = []
    classes: list[str] = []
    tokens: list[str] = []
    tags: list[tuple[str, str | None]] = []
    sent_first_line = 1

    def flush(line_no: int) -> None:
        nonlocal tokens, tags
        if not tokens:
            return
        spans = _tags_to_spans(tags, sent_first_line)
        for sp in spans:
            if sp.label not in classes:
                classes.append(sp.label)
        sentences.append(Sentence(tokens=tokens, spans=spans))
        tokens, tags = [], []

    with open(path, encoding="utf-8") as fh:
        line_no = 0
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                flush(line_no)
                sent_first_line = line_no + 1
                continue
            fields = line.split()
            if len(fields) < 2:
                raise ParseError(f"expected 'token tag', got {raw.rstrip()!r}", line=line_no)
            if not tokens:
                sent_first_line = line_no
            token = fields[0].lower() if lowercase else fields[0]
            tokens.append(token)
            tags.append(_parse_tag(fields[-1], line_no))
        flush(line_no + 1)
    return Dataset(sentences=sentences, classes=classes, split=split).validate()


def spans_to_tags(n_tokens: int, spans: list[TypedSpan]) -> list[str]:
    """BIO tag sequence for flat spans; raises if spans overlap."""
    tags = ["O"] * n_tokens
    occupied = [False] * n_tokens
    for sp in spans:
        if sp.end >= n_tokens:
            raise DataError(f"span ({sp.start}, {sp.end}) out of bounds")
        if any(occupied[sp.start : sp.end + 1]):
            raise DataError(
                f"overlapping spans cannot be written as BIO tags: ({sp.start}, {sp.end})"
            )
        for t in range(sp.start, sp.end + 1):
            occupied[t] = True
            tags[t] = f"I-{sp.label}"
        tags[sp.start] = f"B-{sp.label}"
    return tags


def write_bio(dataset: Dataset, path: str | Path) -> None:
    """Inverse of :func:`read_conll_bio` for flat datasets."""
    lines = []
    for sent in dataset.sentences:
        tags = spans_to_tags(len(sent.tokens), sent.spans)
        lines.extend(f"{tok} {tag}" for tok, tag in zip(sent.tokens, tags))
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def read_class_descriptions(path: str | Path) -> list[ClassDescription]:
    """Load a ``{class name: description}`` JSON object, order preserved."""

    def reject_duplicates(pairs):
        seen = set()
        for key, _ in pairs:
            if key in seen:
                raise DataError(f"duplicate class name {key!r} in description file")
            seen.add(key)
        return dict(pairs)

    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh, object_pairs_hook=reject_duplicates)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON in description file: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError("description file must be a JSON object of name -> text")
    out = []
    for name, text in raw.items():
        if not isinstance(text, str):
            raise DataError(f"description for class {name!r} must be a string")
        out.append(ClassDescription(name=name, text=text))
    return out


def write_class_descriptions(descriptions: list[ClassDescription], path: str | Path) -> None:
    payload = {d.name: d.text for d in descriptions}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_predictions_jsonl(
    sentences: list[Sentence], predictions: list[list], path: str | Path
) -> None:
    """One JSON object per sentence: ``{tokens, spans: [{start, end, class, score}]}``."""
    if len(sentences) != len(predictions):
        raise DataError("one prediction list is required per sentence")
    with open(path, "w", encoding="utf-8") as fh:
        for sent, preds in zip(sentences, predictions):
            row = {
                "tokens": sent.tokens,
                "spans": [
                    {
                        "start": p.span.start,
                        "end": p.span.end,
                        "class": p.label,
                        "score": p.sort_score,
                    }
                    for p in preds
                ],
            }
            fh.write(json.dumps(row) + "\n")
