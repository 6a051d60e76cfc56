"""Dense word embedding spaces with word2vec-style text I/O.

The text format is the interchange boundary to externally trained
embeddings (skipgram, fastText): an optional header line "vocab_size dim"
followed by one "word c1 ... cd" line per word. Components are written
with 9 significant digits, which keeps save/load round trips stable.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Optional

import numpy as np


class EmbeddingSpace:
    """Immutable word -> vector table of fixed dimensionality.

    Lookups of absent words return None (via :meth:`get`) so callers can
    skip missing words instead of diluting averages with zeros.
    """

    def __init__(self, dimension: int, source: Optional[str] = None):
        if dimension <= 0:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension
        self.source = source
        self._index: dict[str, int] = {}
        self._rows: list[np.ndarray] = []
        self._matrix: Optional[np.ndarray] = None

    @classmethod
    def from_dict(cls, table: Mapping[str, Iterable[float]], source=None) -> "EmbeddingSpace":
        items = list(table.items())
        if not items:
            raise ValueError("cannot infer dimension from an empty table")
        space = cls(len(np.asarray(items[0][1], dtype=np.float64)), source=source)
        for word, vec in items:
            space._add(word, np.asarray(vec, dtype=np.float64))
        return space

    def _add(self, word: str, vector: np.ndarray):
        if word in self._index:
            raise ValueError(f"duplicate word {word!r}")
        if vector.shape != (self.dimension,):
            raise ValueError(
                f"vector for {word!r} has {vector.shape[0] if vector.ndim == 1 else '?'} "
                f"components, expected {self.dimension}"
            )
        if not np.all(np.isfinite(vector)):
            raise ValueError(f"non-finite component in vector for {word!r}")
        self._index[word] = len(self._rows)
        self._rows.append(vector)
        self._matrix = None

    def _mat(self) -> np.ndarray:
        if self._matrix is None or len(self._matrix) != len(self._rows):
            self._matrix = (
                np.vstack(self._rows) if self._rows else np.empty((0, self.dimension))
            )
        return self._matrix

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __getitem__(self, word: str) -> np.ndarray:
        return self._mat()[self._index[word]]

    def get(self, word: str) -> Optional[np.ndarray]:
        """Vector for `word`, or None if the word is absent."""
        i = self._index.get(word)
        return None if i is None else self._mat()[i]

    def words(self) -> list[str]:
        return list(self._index)

    def row_index(self, word: str) -> Optional[int]:
        return self._index.get(word)

    @property
    def matrix(self) -> np.ndarray:
        """All vectors as an (n, d) array, rows in insertion order."""
        return self._mat()


def load_text(path) -> EmbeddingSpace:
    """Parse a word2vec text file into an :class:`EmbeddingSpace`.

    A first line consisting of exactly two integers is treated as the
    "vocab_size dim" header; otherwise the dimension is inferred from the
    first data line.
    """
    space = None
    declared = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if lineno == 1 and len(parts) == 2:
                try:
                    declared = (int(parts[0]), int(parts[1]))
                except ValueError:
                    declared = None
                if declared is not None:
                    space = EmbeddingSpace(declared[1], source=str(path))
                    continue
            word = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric component ({exc})") from None
            if space is None:
                if vec.size == 0:
                    raise ValueError(f"{path}:{lineno}: no components on first line")
                space = EmbeddingSpace(vec.size, source=str(path))
            if vec.size != space.dimension:
                raise ValueError(
                    f"{path}:{lineno}: expected {space.dimension} components, got {vec.size}"
                )
            try:
                space._add(word, vec)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if space is None:
        raise ValueError(f"{path}: empty embedding file with no header")
    if declared is not None and len(space) != declared[0]:
        raise ValueError(
            f"{path}: header declares {declared[0]} words, file has {len(space)}"
        )
    return space


def save_text(space: EmbeddingSpace, path) -> None:
    """Write `space` in word2vec text format, words in lexicographic order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(space)} {space.dimension}\n")
        for word in sorted(space.words()):
            comps = " ".join(f"{c:.9g}" for c in space[word])
            fh.write(f"{word} {comps}\n")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two nonzero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def average(vectors) -> np.ndarray:
    """Componentwise arithmetic mean of a nonempty sequence of vectors."""
    vectors = list(vectors)
    if not vectors:
        raise ValueError("average of an empty sequence")
    stacked = np.vstack([np.asarray(v, dtype=np.float64) for v in vectors])
    return stacked.mean(axis=0)
