"""Fixed toy vocabulary and tokenizer for the shapes caption grammar."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, TokenizationError

NULL_ID = 0
NULL_TOKEN = "<null>"

COLORS = ("red", "blue", "yellow", "purple")
SHAPES = ("circle", "square", "triangle", "cross")
# background name -> caption words
BACKGROUND_WORDS = {
    "green-plain": ("green", "plain"),
    "gray-plain": ("gray", "plain"),
    "farm": ("farm",),
    "white-plain": ("white", "plain"),
}
FILLER = ("a", "and", "on")

VOCAB: tuple[str, ...] = (NULL_TOKEN, *FILLER, *COLORS, *SHAPES, "green", "gray", "white", "plain", "farm")
WORD_TO_ID = {w: i for i, w in enumerate(VOCAB)}
VOCAB_SIZE = len(VOCAB)
MAX_LEN = 12


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]

    def __post_init__(self):
        if not self.ids:
            raise ContractError("token sequence must be nonempty")
        if len(self.ids) > MAX_LEN:
            raise ContractError(f"token sequence longer than {MAX_LEN}")
        if any(not 0 <= i < VOCAB_SIZE for i in self.ids):
            raise ContractError("token id outside the vocabulary")

    def __len__(self):
        return len(self.ids)

    @property
    def words(self) -> list[str]:
        return [VOCAB[i] for i in self.ids]

    def index_of(self, word: str, occurrence: int = 0) -> int:
        hits = [k for k, w in enumerate(self.words) if w == word]
        if len(hits) <= occurrence:
            raise ContractError(f"word {word!r} not in caption")
        return hits[occurrence]


NULL_SEQUENCE = TokenSequence((NULL_ID,))


def tokenize(caption: str) -> TokenSequence:
    words = caption.lower().split()
    if not words:
        raise TokenizationError("empty caption")
    ids = []
    for w in words:
        if w not in WORD_TO_ID or w == NULL_TOKEN:
            raise TokenizationError(f"unknown word {w!r}")
        ids.append(WORD_TO_ID[w])
    if len(ids) > MAX_LEN:
        raise TokenizationError(f"caption has {len(ids)} words, limit is {MAX_LEN}")
    return TokenSequence(tuple(ids))


def pad_batch(seqs) -> np.ndarray:
    """Stack sequences into an (B, MAX_LEN) int array padded with the NULL id."""
    out = np.zeros((len(seqs), MAX_LEN), dtype=np.int64)
    for b, s in enumerate(seqs):
        out[b, : len(s)] = s.ids
    return out
