"""Tokenized corpus access: frequency counts, context windows, downsampling.

Input corpora are UTF-8 text, one pre-tokenized lowercased sentence per
line, tokens separated by single spaces. Context windows never cross line
boundaries, and the target occurrence itself is removed from its window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

DEFAULT_WINDOW = 25
PLAN_BUCKETS = 8
PLAN_WORDS_PER_BUCKET = 125
PLAN_MIN_OCCURRENCES = 1000


@dataclass(frozen=True)
class Context:
    """One occurrence's window: up to `window` tokens per side, target removed."""

    tokens: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class ContextSet:
    """A word together with m >= 1 sampled nonempty contexts."""

    word: str
    contexts: Tuple[Context, ...]

    def __post_init__(self):
        if not self.contexts:
            raise ValueError(f"context set for {self.word!r} is empty")


class Corpus:
    """In-memory tokenized corpus with an occurrence index per word.

    Tokens are interned to integer ids; `lines` holds one int32 array per
    input line and `positions(word)` returns the (line, offset) pairs of
    every occurrence in corpus order.
    """

    def __init__(self):
        self.token_count = 0
        self.lines: List[np.ndarray] = []
        self._vocab: List[str] = []
        self._ids: Dict[str, int] = {}
        self._freq: List[int] = []
        self._positions: Dict[int, List[Tuple[int, int]]] = {}
        self._usable: Dict[int, List[Tuple[int, int]]] = {}

    def _intern(self, token: str) -> int:
        wid = self._ids.get(token)
        if wid is None:
            wid = len(self._vocab)
            self._ids[token] = wid
            self._vocab.append(token)
            self._freq.append(0)
            self._positions[wid] = []
        return wid

    def add_line(self, tokens: Sequence[str]) -> None:
        line_idx = len(self.lines)
        ids = np.empty(len(tokens), dtype=np.int32)
        for off, tok in enumerate(tokens):
            wid = self._intern(tok)
            ids[off] = wid
            self._freq[wid] += 1
            self._positions[wid].append((line_idx, off))
        self.lines.append(ids)
        self.token_count += len(tokens)

    def word(self, wid: int) -> str:
        return self._vocab[wid]

    def frequency(self, word: str) -> int:
        wid = self._ids.get(word)
        return 0 if wid is None else self._freq[wid]

    @property
    def frequency_table(self) -> Dict[str, int]:
        return {w: self._freq[i] for i, w in enumerate(self._vocab)}

    def vocabulary(self) -> List[str]:
        return list(self._vocab)

    def positions(self, word: str) -> List[Tuple[int, int]]:
        wid = self._ids.get(word)
        return [] if wid is None else list(self._positions[wid])

    def usable_positions(self, word: str) -> List[Tuple[int, int]]:
        """Occurrences whose context window is nonempty (line has >= 2 tokens).

        Tokens are contiguous within a line, so a window of any size >= 1
        is empty exactly when the target is alone on its line.
        """
        wid = self._ids.get(word)
        if wid is None:
            return []
        cached = self._usable.get(wid)
        if cached is None:
            cached = [
                (li, off) for li, off in self._positions[wid] if len(self.lines[li]) > 1
            ]
            self._usable[wid] = cached
        return cached

    def line_tokens(self, line_idx: int) -> List[str]:
        return [self._vocab[i] for i in self.lines[line_idx]]


def count_frequencies(corpus_path) -> Corpus:
    """Read a corpus file and build the full frequency and position index.

    Raises ValueError with the offending line number on malformed UTF-8.
    """
    corpus = Corpus()
    with open(corpus_path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ValueError(f"{corpus_path}:{lineno}: malformed UTF-8 ({exc})") from None
            corpus.add_line(line.split())
    return corpus


def extract_contexts(corpus: Corpus, word: str, window: int = DEFAULT_WINDOW) -> List[Context]:
    """One context per occurrence of `word`, in corpus order.

    Each context keeps at most `window` tokens on either side of the
    occurrence, drops the target token itself, and never crosses the line
    boundary. Unknown words yield an empty list. Contexts can be empty
    when the target was alone on its line; sampling drops those.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    return [_window_at(corpus, pos, window) for pos in corpus.positions(word)]


def _window_at(corpus: Corpus, position: Tuple[int, int], window: int) -> Context:
    line_idx, off = position
    ids = corpus.lines[line_idx]
    left = ids[max(0, off - window):off]
    right = ids[off + 1:off + 1 + window]
    return Context(
        tuple(corpus.word(i) for i in left) + tuple(corpus.word(i) for i in right)
    )


def context_from_tokens(word: str, tokens: Sequence[str], window: int = DEFAULT_WINDOW) -> Context:
    """Context from a standalone token sequence (a benchmark sentence).

    Windows around the first occurrence of `word`, removing it; a sequence
    not containing the word is used whole.
    """
    toks = list(tokens)
    if word in toks:
        off = toks.index(word)
        kept = tuple(toks[max(0, off - window):off]) + tuple(toks[off + 1:off + 1 + window])
    else:
        kept = tuple(toks)
    return Context(kept)


def sample_context_set(
    corpus: Corpus,
    word: str,
    count: int,
    rng_seed,
    window: int = DEFAULT_WINDOW,
    pad: bool = False,
) -> ContextSet:
    """Sample up to `count` nonempty contexts of `word` without replacement.

    With fewer than `count` available the result is clamped to what exists
    unless `pad` is set, in which case sampling switches to with-replacement
    to reach exactly `count`. Deterministic for a fixed seed.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    available = corpus.usable_positions(word)
    if not available:
        raise ValueError(f"word {word!r} has no usable contexts")
    rng = np.random.default_rng(rng_seed)
    if count >= len(available) and not pad:
        idx = range(len(available))
    elif count > len(available):
        idx = rng.integers(0, len(available), size=count)
    else:
        idx = rng.choice(len(available), size=count, replace=False)
    contexts = tuple(_window_at(corpus, available[i], window) for i in idx)
    return ContextSet(word=word, contexts=contexts)


@dataclass
class DownsamplePlan:
    """Which occurrences of which words survive downsampling.

    `buckets[i]` holds the words whose frequency is reduced to 2**i
    occurrences; `kept_positions[word]` is the set of retained occurrence
    ordinals (0-based, corpus order). `source_frequency` is recorded when
    the plan was built from a live corpus and is used to detect a
    plan/corpus mismatch on application.
    """

    buckets: List[List[str]]
    kept_positions: Dict[str, Set[int]]
    source_frequency: Dict[str, int] = field(default_factory=dict)

    def target_count(self, bucket: int) -> int:
        return 2 ** bucket

    def bucket_of(self, word: str) -> Optional[int]:
        for i, words in enumerate(self.buckets):
            if word in words:
                return i
        return None

    def words(self) -> List[str]:
        return [w for bucket in self.buckets for w in bucket]


def build_downsample_plan(
    corpus: Corpus,
    rng_seed,
    words_per_bucket: int = PLAN_WORDS_PER_BUCKET,
    min_occurrences: int = PLAN_MIN_OCCURRENCES,
) -> DownsamplePlan:
    """Pick 8 * words_per_bucket eligible words and choose occurrences to keep.

    Eligible words occur at least `min_occurrences` times, are fully
    alphabetic, and have length >= 2. Bucket i retains exactly 2**i
    randomly chosen occurrences per word.
    """
    if min_occurrences < 2 ** (PLAN_BUCKETS - 1):
        raise ValueError(
            f"min_occurrences must be >= {2 ** (PLAN_BUCKETS - 1)} so the top bucket "
            "can retain that many occurrences"
        )
    eligible = sorted(
        w
        for w, f in corpus.frequency_table.items()
        if f >= min_occurrences and w.isalpha() and len(w) >= 2
    )
    needed = PLAN_BUCKETS * words_per_bucket
    if len(eligible) < needed:
        raise ValueError(
            f"need {needed} eligible words (freq >= {min_occurrences}, alphabetic, "
            f"length >= 2), corpus has only {len(eligible)}"
        )
    rng = np.random.default_rng(rng_seed)
    chosen = [eligible[i] for i in rng.choice(len(eligible), size=needed, replace=False)]
    rng.shuffle(chosen)
    buckets = [chosen[i * words_per_bucket:(i + 1) * words_per_bucket] for i in range(PLAN_BUCKETS)]
    kept: Dict[str, Set[int]] = {}
    freqs: Dict[str, int] = {}
    for i, bucket in enumerate(buckets):
        keep_n = 2 ** i
        for w in bucket:
            f = corpus.frequency(w)
            freqs[w] = f
            kept[w] = set(int(k) for k in rng.choice(f, size=keep_n, replace=False))
    return DownsamplePlan(buckets=buckets, kept_positions=kept, source_frequency=freqs)


def save_plan(plan: DownsamplePlan, path) -> None:
    """Serialize as "word<TAB>bucket<TAB>idx,idx,..." lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, bucket in enumerate(plan.buckets):
            for w in bucket:
                idx = ",".join(str(k) for k in sorted(plan.kept_positions[w]))
                fh.write(f"{w}\t{i}\t{idx}\n")


def load_plan(path) -> DownsamplePlan:
    buckets: List[List[str]] = [[] for _ in range(PLAN_BUCKETS)]
    kept: Dict[str, Set[int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                word, bucket_s, idx_s = line.split("\t")
                bucket = int(bucket_s)
                indices = set(int(x) for x in idx_s.split(","))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed plan line") from None
            if not 0 <= bucket < PLAN_BUCKETS:
                raise ValueError(f"{path}:{lineno}: bucket {bucket} out of range")
            if len(indices) != 2 ** bucket:
                raise ValueError(
                    f"{path}:{lineno}: bucket {bucket} word {word!r} keeps "
                    f"{len(indices)} occurrences, expected {2 ** bucket}"
                )
            buckets[bucket].append(word)
            kept[word] = indices
    return DownsamplePlan(buckets=buckets, kept_positions=kept)


def apply_downsample(corpus_path, plan: DownsamplePlan, out_path) -> int:
    """Write a copy of the corpus with non-retained plan-word tokens deleted.

    Only single tokens are removed; lines stay otherwise intact. Returns the
    number of tokens removed. Raises if the corpus disagrees with the plan
    (occurrence counts changed since the plan was built).
    """
    seen = {w: 0 for w in plan.kept_positions}
    removed = 0
    with open(corpus_path, "r", encoding="utf-8") as src, open(
        out_path, "w", encoding="utf-8"
    ) as dst:
        for line in src:
            toks = line.split()
            out = []
            for tok in toks:
                occ = seen.get(tok)
                if occ is None:
                    out.append(tok)
                    continue
                seen[tok] = occ + 1
                if occ in plan.kept_positions[tok]:
                    out.append(tok)
                else:
                    removed += 1
            dst.write(" ".join(out) + "\n")
    for w, total in seen.items():
        expected = plan.source_frequency.get(w)
        if expected is not None and total != expected:
            raise ValueError(
                f"plan/corpus mismatch: {w!r} occurs {total} times, plan was built on {expected}"
            )
        if plan.kept_positions[w] and max(plan.kept_positions[w]) >= total:
            raise ValueError(
                f"plan/corpus mismatch: {w!r} occurs {total} times but plan retains index "
                f"{max(plan.kept_positions[w])}"
            )
    return removed
