"""Character n-gram decomposition and the surface-form embedding.

Words are wrapped in angle-bracket boundary markers before n-grams of
lengths n_min..n_max are enumerated, fastText style. The form embedding of
a word is the mean of the learned embedding rows of its in-vocabulary
n-grams; a word with none is "formless".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class NgramConfig:
    n_min: int = 3
    n_max: int = 5
    min_count: int = 3

    def __post_init__(self):
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError(f"need 1 <= n_min <= n_max, got [{self.n_min}, {self.n_max}]")
        if self.min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {self.min_count}")


def extract_ngrams(word: str, config: NgramConfig = NgramConfig()) -> List[str]:
    """All character n-grams of "<word>", left to right, duplicates kept."""
    if not word:
        raise ValueError("cannot extract n-grams of an empty word")
    marked = f"<{word}>"
    grams = []
    for n in range(config.n_min, config.n_max + 1):
        for i in range(len(marked) - n + 1):
            grams.append(marked[i:i + n])
    return grams


@dataclass
class NgramVocab:
    """Dense n-gram -> id index built from a set of training words.

    Only n-grams occurring in at least `min_count` distinct training words
    are indexed. `built_from` keeps the training words at build time and is
    not serialized into checkpoints.
    """

    config: NgramConfig
    index: Dict[str, int]
    built_from: Optional[frozenset] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.index)

    def ids(self, word: str) -> List[int]:
        """Ids of the word's in-vocabulary n-grams, duplicates kept."""
        idx = self.index
        return [idx[g] for g in extract_ngrams(word, self.config) if g in idx]


def build_vocab(words: Iterable[str], config: NgramConfig = NgramConfig()) -> NgramVocab:
    """Index every n-gram seen in >= min_count distinct words."""
    seen_in: Dict[str, int] = {}
    wordset = frozenset(words)
    for word in wordset:
        for g in set(extract_ngrams(word, config)):
            seen_in[g] = seen_in.get(g, 0) + 1
    kept = sorted(g for g, c in seen_in.items() if c >= config.min_count)
    return NgramVocab(
        config=config,
        index={g: i for i, g in enumerate(kept)},
        built_from=wordset,
    )


def init_table(vocab: NgramVocab, dim: int, rng, scale: float = 0.01) -> np.ndarray:
    """Fresh (|vocab|, dim) embedding table, entries iid N(0, scale^2)."""
    rng = np.random.default_rng(rng)
    return rng.normal(0.0, scale, size=(len(vocab), dim))


def form_embedding(
    word: str, vocab: NgramVocab, table: np.ndarray
) -> Tuple[np.ndarray, bool]:
    """Mean of the word's in-vocabulary n-gram rows.

    Returns (vector, formless). A formless word (no in-vocabulary n-grams)
    yields the zero vector with the flag set; unseen n-grams are skipped,
    never hashed.
    """
    ids = vocab.ids(word)
    if not ids:
        return np.zeros(table.shape[1]), True
    return table[ids].mean(axis=0), False
