import mpmath
import numpy as np
import pytest

from mimicvec import EmbeddingSpace, average, cosine, load_text, save_text


class TestLoadText:
    def test_headered_file(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("2 3\na 1 0 0\nb 0 1 0\n", encoding="utf-8")
        space = load_text(path)
        assert space.dimension == 3
        assert len(space) == 2
        np.testing.assert_array_equal(space["a"], [1, 0, 0])
        np.testing.assert_array_equal(space["b"], [0, 1, 0])

    def test_headerless_infers_dimension(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1 2 3 4\nb 5 6 7 8\n", encoding="utf-8")
        space = load_text(path)
        assert space.dimension == 4
        assert len(space) == 2

    def test_inconsistent_dimension_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1 2 3\nb 1 2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="expected 3 components"):
            load_text(path)

    def test_duplicate_word_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1 2\na 3 4\n", encoding="utf-8")
        with pytest.raises(ValueError, match="duplicate"):
            load_text(path)

    def test_non_numeric_component_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1 x\n", encoding="utf-8")
        with pytest.raises(ValueError, match="non-numeric"):
            load_text(path)

    def test_header_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("3 2\na 1 2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="header declares 3"):
            load_text(path)


class TestSaveText:
    def test_round_trip_random_space(self, tmp_path, random_space):
        space = random_space([f"w{i}" for i in range(20)], dim=6, seed=3)
        path = tmp_path / "emb.txt"
        save_text(space, path)
        loaded = load_text(path)
        assert loaded.dimension == space.dimension
        assert sorted(loaded.words()) == sorted(space.words())
        for w in space.words():
            np.testing.assert_allclose(loaded[w], space[w], rtol=1e-8)

    def test_second_round_trip_is_bit_stable(self, tmp_path, random_space):
        space = random_space([f"w{i}" for i in range(10)], dim=5, seed=9)
        first = tmp_path / "a.txt"
        second = tmp_path / "b.txt"
        save_text(space, first)
        save_text(load_text(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_empty_space_writes_header_only(self, tmp_path):
        space = EmbeddingSpace(4)
        path = tmp_path / "emb.txt"
        save_text(space, path)
        assert path.read_text(encoding="utf-8") == "0 4\n"

    def test_single_word_survives(self, tmp_path):
        space = EmbeddingSpace.from_dict({"only": [1.5, -2.25]})
        path = tmp_path / "emb.txt"
        save_text(space, path)
        loaded = load_text(path)
        assert loaded.words() == ["only"]
        np.testing.assert_allclose(loaded["only"], [1.5, -2.25])

    def test_words_sorted_lexicographically(self, tmp_path):
        space = EmbeddingSpace.from_dict({"zeta": [1.0], "alpha": [2.0], "mid": [3.0]})
        path = tmp_path / "emb.txt"
        save_text(space, path)
        words = [line.split()[0] for line in path.read_text().splitlines()[1:]]
        assert words == sorted(words)


class TestSpaceLookups:
    def test_absent_word_distinguishable_from_zero_vector(self):
        space = EmbeddingSpace.from_dict({"zero": [0.0, 0.0]})
        assert space.get("zero") is not None
        assert space.get("missing") is None
        assert "missing" not in space

    def test_non_finite_vector_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            EmbeddingSpace.from_dict({"bad": [1.0, float("nan")]})


class TestCosine:
    def test_self_similarity_is_one(self):
        v = np.array([3.0, -1.0, 2.0])
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthonormal_axes_are_zero(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_matches_high_precision_oracle(self):
        rng = np.random.default_rng(7)
        mpmath.mp.dps = 50
        for _ in range(50):
            a = rng.normal(size=12)
            b = rng.normal(size=12)
            dot = mpmath.fsum(mpmath.mpf(x) * mpmath.mpf(y) for x, y in zip(a, b))
            na = mpmath.sqrt(mpmath.fsum(mpmath.mpf(x) ** 2 for x in a))
            nb = mpmath.sqrt(mpmath.mpf(mpmath.fsum(mpmath.mpf(y) ** 2 for y in b)))
            expected = float(dot / (na * nb))
            assert cosine(a, b) == pytest.approx(expected, abs=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero vector"):
            cosine(np.zeros(3), np.ones(3))

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            a = rng.normal(size=5)
            b = rng.normal(size=5)
            assert cosine(a, b) == pytest.approx(cosine(b, a), abs=1e-15)
            assert abs(cosine(a, b)) <= 1 + 1e-12


class TestAverage:
    def test_singleton_is_identity(self):
        v = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(average([v]), v)

    def test_opposite_vectors_cancel(self):
        v = np.array([1.0, -4.0])
        np.testing.assert_allclose(average([v, -v]), np.zeros(2), atol=1e-15)

    def test_matches_sum_over_n_oracle(self):
        rng = np.random.default_rng(5)
        vectors = [rng.normal(size=7) for _ in range(13)]
        expected = np.array(
            [sum(float(v[i]) for v in vectors) / len(vectors) for i in range(7)]
        )
        np.testing.assert_allclose(average(vectors), expected, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            average([])
