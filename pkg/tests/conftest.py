import numpy as np
import pytest

from mimicvec import EmbeddingSpace


@pytest.fixture
def write_corpus(tmp_path):
    """Write lines to a corpus file and return its path."""

    def _write(lines, name="corpus.txt"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write


@pytest.fixture
def random_space():
    """Random embedding space over the given words."""

    def _make(words, dim=8, seed=0):
        rng = np.random.default_rng(seed)
        return EmbeddingSpace.from_dict({w: rng.normal(size=dim) for w in words})

    return _make
