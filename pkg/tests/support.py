"""Synthetic benchmark corpus and a count-based embedding trainer.

Everything here is test-side tooling: the package consumes pre-trained
embedding files and never trains them, so the desk-scale benchmark run
fabricates its own. The corpus generator produces topic-structured text
whose word surface forms carry topic morphology (same-topic words share
syllables), giving both the context branch and the form branch a real
signal to learn. The embedder factorizes a PPMI co-occurrence matrix with
a truncated SVD, the classic count-based stand-in for skipgram training;
its quality for a word degrades as that word's occurrences shrink, which
is exactly the behaviour the downsampling benchmark measures.
"""

from __future__ import annotations

import numpy as np

from mimicvec import Corpus, EmbeddingSpace

VOWELS = "aeiou"
TOPIC_CONSONANTS = ["bd", "fg", "kl", "mn", "pr", "st", "vz", "wj"]

N_TOPICS = 8
PLAN_CANDIDATES_PER_TOPIC = 30   # frequency >= 1000, downsampling-eligible
MID_WORDS_PER_TOPIC = 80         # frequency 110..900, the training diet
TAIL_WORDS_PER_TOPIC = 40        # too rare to train on
FUNCTION_WORDS = 40              # topic-neutral glue, digit-tagged so they
                                 # never enter a downsampling plan


def _topic_words(topic: int, count: int, rng) -> list:
    """Unique 2-3 syllable words built from the topic's own consonants."""
    cons = TOPIC_CONSONANTS[topic]
    syllables = [c1 + v + c2 for c1 in cons for v in VOWELS for c2 in cons]
    words = []
    seen = set()
    while len(words) < count:
        n = int(rng.integers(2, 4))
        word = "".join(syllables[i] for i in rng.integers(0, len(syllables), size=n))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


NOISE_FRACTION = 0.3  # share of each word's occurrences placed in mixed-topic sentences


def build_benchmark_corpus(path, seed=0) -> dict:
    """Write a ~1M token topic corpus; returns the vocabulary layout.

    Most sentences mix ~9 content tokens of a single topic with ~5
    function tokens, so those context windows are topic-pure. A fixed
    fraction of every word's occurrences instead lands in mixed-topic
    sentences: uninformative contexts that a reliability-weighting model
    should learn to discount. Content word frequencies are exact by
    construction: plan candidates sit above the 1000-occurrence
    eligibility floor, mid-band words form the training set, tail words
    fall below the training threshold.
    """
    rng = np.random.default_rng(seed)
    layout = {"plan_candidates": [], "mid": [], "tail": []}
    pure_pools = []
    noise_pool = []
    for topic in range(N_TOPICS):
        words = _topic_words(
            topic,
            PLAN_CANDIDATES_PER_TOPIC + MID_WORDS_PER_TOPIC + TAIL_WORDS_PER_TOPIC,
            rng,
        )
        candidates = words[:PLAN_CANDIDATES_PER_TOPIC]
        mid = words[PLAN_CANDIDATES_PER_TOPIC:PLAN_CANDIDATES_PER_TOPIC + MID_WORDS_PER_TOPIC]
        tail = words[-TAIL_WORDS_PER_TOPIC:]
        layout["plan_candidates"].extend(candidates)
        layout["mid"].extend(mid)
        layout["tail"].extend(tail)
        freqs = np.concatenate([
            np.geomspace(1050, 2400, PLAN_CANDIDATES_PER_TOPIC).astype(int),
            np.geomspace(110, 900, MID_WORDS_PER_TOPIC).astype(int),
            np.geomspace(10, 90, TAIL_WORDS_PER_TOPIC).astype(int),
        ])
        pool = np.repeat(np.arange(len(words)), freqs)
        rng.shuffle(pool)
        split = int(len(pool) * NOISE_FRACTION)
        noise_pool.extend(words[i] for i in pool[:split])
        pure_pools.append((words, pool[split:]))

    function_words = [f"f{i}" for i in range(FUNCTION_WORDS)]
    layout["function"] = function_words

    def assemble(content_tokens):
        n_func = int(rng.integers(4, 7))
        chunk = list(content_tokens)
        chunk += [function_words[i] for i in rng.integers(0, FUNCTION_WORDS, size=n_func)]
        rng.shuffle(chunk)
        return " ".join(chunk)

    content_per_sentence = 9
    sentences = []
    for words, pool in pure_pools:
        for start in range(0, len(pool), content_per_sentence):
            sentences.append(
                assemble(words[i] for i in pool[start:start + content_per_sentence])
            )
    noise_pool = np.array(noise_pool, dtype=object)
    rng.shuffle(noise_pool)
    for start in range(0, len(noise_pool), content_per_sentence):
        sentences.append(assemble(noise_pool[start:start + content_per_sentence]))

    order = rng.permutation(len(sentences))
    with open(path, "w", encoding="utf-8") as fh:
        for i in order:
            fh.write(sentences[i] + "\n")
    return layout


def count_based_embeddings(corpus: Corpus, dim: int = 50, window: int = 5) -> EmbeddingSpace:
    """PPMI co-occurrence factorization: rows of U_k sqrt(S_k).

    Deterministic for a fixed corpus; every word in the corpus gets a
    vector, however few occurrences back it (mirroring an embedding
    trainer run with its minimum count disabled for test words).
    """
    vocab = corpus.vocabulary()
    v = len(vocab)
    sep = v  # virtual boundary token between lines
    stream = np.concatenate(
        [np.concatenate([ids, [sep]]) for ids in corpus.lines]
    ).astype(np.int64)
    boundary = np.concatenate([[0], np.cumsum(stream == sep)])
    counts = np.zeros(v * v, dtype=np.int64)
    for k in range(1, window + 1):
        first = stream[:-k]
        second = stream[k:]
        valid = boundary[k:-1] == boundary[:-k - 1]  # no line boundary in between
        valid &= (first != sep) & (second != sep)
        a, b = first[valid], second[valid]
        counts += np.bincount(a * v + b, minlength=v * v)
        counts += np.bincount(b * v + a, minlength=v * v)
    counts = counts.reshape(v, v).astype(np.float64)

    total = counts.sum()
    row = counts.sum(axis=1, keepdims=True)
    col = counts.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts * total / (row * col))
    ppmi = np.where(counts > 0, np.maximum(pmi, 0.0), 0.0)
    u, s, _ = np.linalg.svd(ppmi, full_matrices=False)
    vectors = u[:, :dim] * np.sqrt(s[:dim])
    # a word with an all-zero row would get the zero vector; nudge it so
    # cosine stays defined (does not occur for generated corpora)
    norms = np.linalg.norm(vectors, axis=1)
    vectors[norms == 0] = 1e-9
    return EmbeddingSpace.from_dict({w: vectors[i] for i, w in enumerate(vocab)})


def infer_plan_words(plan, corpus, checkpoint, space):
    """Model embeddings for every plan word from all its remaining contexts."""
    from mimicvec import extract_contexts, infer
    from mimicvec.corpus import ContextSet

    inferred = {}
    for word in plan.words():
        contexts = [c for c in extract_contexts(corpus, word) if len(c) > 0]
        context_set = ContextSet(word, tuple(contexts)) if contexts else None
        vector, _ = infer(word, context_set, checkpoint.params, space, mode="full")
        inferred[word] = vector
    return inferred
