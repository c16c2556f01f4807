"""Token vocabulary with reserved control tokens and deterministic build order."""

from __future__ import annotations

import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

_TOKEN_RE = re.compile(r"[\w']+|[^\w\s]")


class CorpusError(ValueError):
    """Raised for empty corpora or malformed vocabulary input."""


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, keep punctuation marks as tokens."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Bidirectional token/index map. Indices 0..3 are the reserved control
    tokens; everything else is a corpus token."""

    def __init__(self, tokens: Sequence[str]):
        self.index_to_token: list[str] = list(RESERVED)
        self.token_to_index: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self.token_to_index:
                raise CorpusError(f"duplicate or reserved token {tok!r}")
            self.token_to_index[tok] = len(self.index_to_token)
            self.index_to_token.append(tok)

    @property
    def size(self) -> int:
        return len(self.index_to_token)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_to_index.get(t, UNK_ID) for t in tokens]

    def decode(self, indices: Iterable[int]) -> list[str]:
        out = []
        for i in indices:
            i = int(i)
            if not 0 <= i < self.size:
                raise CorpusError(f"index {i} out of range for vocabulary of size {self.size}")
            out.append(self.index_to_token[i])
        return out

    def decode_text(self, indices: Iterable[int]) -> list[str]:
        """Decode and drop control tokens; the surface form of a sequence."""
        return [t for t in self.decode(indices) if t not in RESERVED]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.index_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(lines[:4]) != RESERVED:
            raise CorpusError(f"vocabulary file {path} does not start with the reserved tokens")
        return cls(lines[4:])


def build_vocab(sequences: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Vocabulary of all tokens with corpus frequency >= min_count, inserted
    by descending frequency then lexicographic order."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for seq in sequences:
        counts.update(seq)
    if not counts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)
