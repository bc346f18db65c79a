"""Token spans: candidates, labeled annotations, and enumeration helpers."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError


@dataclass(frozen=True, order=True)
class Span:
    """Contiguous token range, inclusive on both ends."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise DataError(f"invalid span ({self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def overlaps(self, other: "Span") -> bool:
        return self.start <= other.end and other.start <= self.end

    def within(self, n_tokens: int) -> bool:
        return self.end < n_tokens


@dataclass(frozen=True, order=True)
class TypedSpan:
    """A span with an entity class label."""

    start: int
    end: int
    label: str

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise DataError(f"invalid span ({self.start}, {self.end})")
        if not self.label:
            raise DataError("typed span requires a non-empty label")

    @property
    def span(self) -> Span:
        return Span(self.start, self.end)


def enumerate_spans(n_tokens: int, max_span_len: int | None = None) -> list[Span]:
    """All candidate spans (i, j) with i <= j < n_tokens and length <= max_span_len."""
    if n_tokens < 0:
        raise DataError(f"negative token count {n_tokens}")
    out = []
    for i in range(n_tokens):
        top = n_tokens if max_span_len is None else min(n_tokens, i + max_span_len)
        for j in range(i, top):
            out.append(Span(i, j))
    return out


def check_in_bounds(spans, n_tokens: int) -> None:
    for s in spans:
        if s.end >= n_tokens:
            raise DataError(f"span ({s.start}, {s.end}) out of bounds for {n_tokens} tokens")
