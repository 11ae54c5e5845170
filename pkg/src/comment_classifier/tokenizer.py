"""Deterministic corpus-built tokenizer with fixed special tokens.

Splitting rule: whitespace first, then a split at every boundary between
alphanumeric and non-alphanumeric characters, so "foo(bar)" becomes
["foo", "(", "bar", ")"]. Case is preserved (comments reference
case-sensitive identifiers). The literal marker ``SEP_TEXT`` survives
splitting intact and maps to the SEP id, which is how input builders
join a prefix (class name or category) to a comment sentence.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import groupby
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
SEP_ID = 3

PAD_TEXT = "<pad>"
UNK_TEXT = "<unk>"
CLS_TEXT = "<cls>"
SEP_TEXT = "<sep>"

SPECIAL_TOKENS = (PAD_TEXT, UNK_TEXT, CLS_TEXT, SEP_TEXT)

DEFAULT_MAX_LEN = 128


@dataclass
class Vocab:
    """Frozen token table; ids are dense and the four special ids are fixed."""

    token_to_id: dict[str, int]
    id_to_token: list[str]

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def save(self, path: str | Path) -> None:
        """One token per line, line number = id, UTF-8."""
        Path(path).write_text("\n".join(self.id_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        tokens = Path(path).read_text(encoding="utf-8").splitlines()
        if tokens[: len(SPECIAL_TOKENS)] != list(SPECIAL_TOKENS):
            raise ValueError(f"vocabulary file {path} does not start with the special tokens")
        return cls({tok: i for i, tok in enumerate(tokens)}, tokens)


def tokenize(text: str) -> list[str]:
    """Split into pieces; SEP_TEXT is kept atomic when whitespace-delimited."""
    pieces: list[str] = []
    for word in text.split():
        if word == SEP_TEXT:
            pieces.append(word)
            continue
        for _, run in groupby(word, key=str.isalnum):
            pieces.append("".join(run))
    return pieces


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocab:
    """Rank tokens by frequency descending, ties lexicographic ascending.

    The result is truncated to ``max_size`` ids including the four
    specials. An empty corpus yields a specials-only vocabulary.
    """
    if max_size < 5:
        raise ValueError(f"max_size must be >= 5, got {max_size}")
    counts: Counter[str] = Counter()
    for text in corpus:
        for piece in tokenize(text):
            if piece not in SPECIAL_TOKENS:
                counts[piece] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    id_to_token = list(SPECIAL_TOKENS) + [tok for tok, _ in ranked]
    id_to_token = id_to_token[:max_size]
    return Vocab({tok: i for i, tok in enumerate(id_to_token)}, id_to_token)


def encode(text: str, vocab: Vocab, max_len: int = DEFAULT_MAX_LEN) -> list[int]:
    """[CLS] ids [SEP], truncated to max_len keeping the prefix; SEP stays last."""
    if max_len < 2:
        raise ValueError(f"max_len must be >= 2, got {max_len}")
    ids = [vocab.lookup(piece) for piece in tokenize(text)]
    return [CLS_ID] + ids[: max_len - 2] + [SEP_ID]


def decode(ids: Sequence[int], vocab: Vocab) -> list[str]:
    return [vocab.id_to_token[i] for i in ids]


def pad_batch(sequences: Sequence[Sequence[int]]) -> tuple[Tensor, Tensor]:
    """Pad to the batch max length; mask is 1 at real tokens, 0 at PAD."""
    if not sequences:
        raise ValueError("pad_batch requires a non-empty list")
    t = max(len(s) for s in sequences)
    ids = np.full((len(sequences), t), PAD_ID, dtype=np.float32)
    mask = np.zeros((len(sequences), t), dtype=np.float32)
    for i, seq in enumerate(sequences):
        ids[i, : len(seq)] = seq
        mask[i, : len(seq)] = 1.0
    return Tensor(ids), Tensor(mask)
