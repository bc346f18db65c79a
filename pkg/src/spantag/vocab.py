"""Whitespace tokenization with a word-level vocabulary.

Two ids are reserved: 0 for padding and 1 for unknown tokens. All other
ids are assigned densely in a deterministic order (frequency, then
alphabetical), so the same corpus always yields the same vocabulary.
"""

from __future__ import annotations

import warnings
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, DataError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1
N_RESERVED = 2


class Vocabulary:
    """Token <-> id map with reserved padding and unknown ids.

    ``lowercase=True`` folds case at lookup time, matching the case-folding
    applied to training corpora.
    """

    def __init__(self, tokens: Iterable[str] = (), lowercase: bool = True):
        self.lowercase = lowercase
        self._token_to_id: dict[str, int] = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        self._id_to_token: list[str] = [PAD_TOKEN, UNK_TOKEN]
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        token = token.lower() if self.lowercase else token
        if not token or any(ch.isspace() for ch in token):
            raise DataError(f"invalid vocabulary token: {token!r}")
        if token in self._token_to_id:
            return self._token_to_id[token]
        idx = len(self._id_to_token)
        self._token_to_id[token] = idx
        self._id_to_token.append(token)
        return idx

    def id_of(self, token: str) -> int:
        if self.lowercase:
            token = token.lower()
        return self._token_to_id.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self._id_to_token):
            raise DataError(f"token id {idx} out of range (vocab size {len(self)})")
        return self._id_to_token[idx]

    def __contains__(self, token: str) -> bool:
        if self.lowercase:
            token = token.lower()
        return token in self._token_to_id

    def __len__(self) -> int:
        return len(self._id_to_token)

    @property
    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order."""
        return self._id_to_token[N_RESERVED:]

    def save(self, path: str | Path) -> None:
        """Write the newline-delimited token list (line index = id - reserved)."""
        Path(path).write_text("\n".join(self.tokens) + ("\n" if self.tokens else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, lowercase: bool = True) -> "Vocabulary":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        return cls(lines, lowercase=lowercase)


def build_vocab(corpus: Sequence[str], min_count: int = 1, lowercase: bool = True) -> Vocabulary:
    """Build a vocabulary from raw sentences.

    Every whitespace token with frequency >= ``min_count`` gets an id; all
    others fall back to the unknown id at lookup time. Token order is
    deterministic: descending frequency, ties broken alphabetically.
    """
    if not corpus:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for sentence in corpus:
        toks = sentence.lower().split() if lowercase else sentence.split()
        counts.update(toks)
    kept = sorted(
        (tok for tok, n in counts.items() if n >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(kept, lowercase=lowercase)


def encode_tokens(
    tokens: Sequence[str], vocab: Vocabulary, max_len: int | None = None
) -> list[int]:
    """Map an already-split token sequence to ids, truncating with a warning.

    Unknown tokens map to the unknown id.
    """
    ids = [vocab.id_of(tok) for tok in tokens]
    if max_len is not None and len(ids) > max_len:
        warnings.warn(
            f"sentence of {len(ids)} tokens truncated to {max_len}",
            stacklevel=2,
        )
        ids = ids[:max_len]
    return ids


def tokenize(text: str, vocab: Vocabulary, max_len: int | None = None) -> list[int]:
    """Map a raw sentence to token ids; tokenization is whitespace splitting."""
    return encode_tokens(text.split(), vocab, max_len)


def detokenize(ids: Sequence[int], vocab: Vocabulary) -> str:
    return " ".join(vocab.token_of(i) for i in ids)
