"""Measurement machinery for inferred embeddings.

Covers the full benchmark protocol: fit an orthogonal map between a test
space and a gold space on a dictionary of shared words, score inferred
embeddings per downsampling bucket by average cosine against gold, rank
correlation against human similarity scores, a logistic-regression probe
on top of embeddings, and exact binomial sign tests for pairwise model
comparisons.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import comb, lgamma
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .corpus import DownsamplePlan
from .embeddings import EmbeddingSpace, cosine
from .training import AdamState

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Orthogonal alignment between embedding spaces


@dataclass
class AlignmentMap:
    """Orthogonal matrix mapping test-space vectors into the gold space."""

    matrix: np.ndarray
    dictionary: List[Tuple[str, str]]
    singular_values: np.ndarray
    rank: int

    def apply(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector


def fit_alignment(
    test_space: EmbeddingSpace,
    gold_space: EmbeddingSpace,
    dictionary: Sequence,
) -> AlignmentMap:
    """Least-squares orthogonal map W minimizing sum ||W x_i - y_i||^2.

    `dictionary` holds (test_word, gold_word) pairs; bare strings mean the
    same word on both sides. Solved by SVD of the cross-covariance
    X^T Y = U S V^T with W = V U^T, which stays orthogonal even when the
    best map is a reflection. Rank deficiency is reported, not fatal.
    """
    pairs = [(p, p) if isinstance(p, str) else (p[0], p[1]) for p in dictionary]
    if not pairs:
        raise ValueError("empty alignment dictionary")
    missing = [p for p in pairs if p[0] not in test_space or p[1] not in gold_space]
    if missing:
        raise ValueError(
            f"{len(missing)} dictionary pairs missing from the spaces, first: {missing[0]}"
        )
    x = np.vstack([test_space[a] for a, _ in pairs])
    y = np.vstack([gold_space[b] for _, b in pairs])
    if len(pairs) < test_space.dimension:
        logger.warning(
            "alignment dictionary has %d pairs for dimension %d; map may be poorly determined",
            len(pairs),
            test_space.dimension,
        )
    u, s, vt = np.linalg.svd(x.T @ y)
    tol = s.max() * max(x.shape) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int((s > tol).sum())
    if rank < test_space.dimension:
        logger.warning(
            "cross-covariance is rank deficient: rank %d < %d (condition diagnostics: "
            "smallest singular value %.3g)",
            rank,
            test_space.dimension,
            float(s.min()) if s.size else 0.0,
        )
    w = vt.T @ u.T
    return AlignmentMap(matrix=w, dictionary=pairs, singular_values=s, rank=rank)


@dataclass
class BucketScore:
    occurrences: int
    mean_cosine: Optional[float]
    word_count: int
    skipped: int


@dataclass
class AlignmentReport:
    """Per-bucket average cosine between mapped inferred and gold embeddings."""

    buckets: List[BucketScore]

    def scores(self) -> List[Optional[float]]:
        return [b.mean_cosine for b in self.buckets]

    def total_skipped(self) -> int:
        return sum(b.skipped for b in self.buckets)


def score_alignment(
    inferred: Mapping[str, np.ndarray],
    gold_space: EmbeddingSpace,
    amap: AlignmentMap,
    plan: DownsamplePlan,
) -> AlignmentReport:
    """Average cosine(W @ inferred(w), gold(w)) per downsampling bucket.

    Words without an inferred vector are counted as skips and excluded
    from the mean; a nonempty bucket losing all its words is an error.
    """
    buckets = []
    for i, words in enumerate(plan.buckets):
        sims = []
        skipped = 0
        for w in words:
            gold = gold_space.get(w)
            if gold is None:
                raise ValueError(f"plan word {w!r} has no gold embedding")
            vec = inferred.get(w)
            if vec is None:
                skipped += 1
                continue
            sims.append(cosine(amap.apply(np.asarray(vec, dtype=np.float64)), gold))
        if words and not sims:
            raise ValueError(f"bucket {2 ** i}: every word was skipped")
        buckets.append(
            BucketScore(
                occurrences=2 ** i,
                mean_cosine=float(np.mean(sims)) if sims else None,
                word_count=len(sims),
                skipped=skipped,
            )
        )
    return AlignmentReport(buckets=buckets)


def format_alignment_table(reports: Mapping[str, AlignmentReport]) -> str:
    """Aligned text table: models as rows, buckets as columns, scores x100."""
    any_report = next(iter(reports.values()))
    header = ["model"] + [str(b.occurrences) for b in any_report.buckets] + ["skips"]
    rows = [header]
    for name, report in reports.items():
        cells = [name]
        for b in report.buckets:
            cells.append("-" if b.mean_cosine is None else f"{100 * b.mean_cosine:.1f}")
        cells.append(str(report.total_skipped()))
        rows.append(cells)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for row in rows:
        first = row[0].ljust(widths[0])
        rest = "  ".join(c.rjust(widths[i + 1]) for i, c in enumerate(row[1:]))
        lines.append(f"{first}  {rest}".rstrip())
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Rank correlation


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(pred: Sequence[float], gold: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    pred = np.asarray(pred, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.float64)
    if pred.shape != gold.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gold.shape}")
    if pred.size < 2:
        raise ValueError("need at least two observations")
    rp = _average_ranks(pred)
    rg = _average_ranks(gold)
    dp = rp - rp.mean()
    dg = rg - rg.mean()
    denom = np.sqrt((dp @ dp) * (dg @ dg))
    if denom == 0.0:
        raise ValueError("rank correlation undefined for a constant sequence")
    return float((dp @ dg) / denom)


def eval_similarity(
    benchmark: Sequence[Tuple[str, str, float]],
    infer_fn: Optional[Callable[[str], np.ndarray]],
    space: EmbeddingSpace,
) -> float:
    """Spearman correlation of predicted cosines against gold scores.

    Each entry is (probe_word, partner_word, gold_score). The probe word's
    vector comes from `infer_fn` (a space lookup when None, which suits
    plain word-pair benchmarks); the partner must be in the space.
    """
    if infer_fn is None:
        infer_fn = lambda w: space[w]
    predicted = []
    gold_scores = []
    for probe, partner, score in benchmark:
        vec_b = space.get(partner)
        if vec_b is None:
            raise ValueError(f"benchmark word {partner!r} has no embedding")
        predicted.append(cosine(infer_fn(probe), vec_b))
        gold_scores.append(score)
    return spearman(predicted, gold_scores)


# ---------------------------------------------------------------------------
# Logistic-regression probe


@dataclass
class ProbeModel:
    labels: List[str]
    weights: np.ndarray   # (n_labels, d)
    bias: np.ndarray      # (n_labels,)
    single_label: bool


@dataclass
class BinMetrics:
    low: int
    high: int
    accuracy: Optional[float]
    micro_f1: Optional[float]
    count: int


@dataclass
class ProbeMetrics:
    accuracy: float
    micro_f1: float
    count: int
    bins: List[BinMetrics]


def _probe_matrix(rows, embeddings: EmbeddingSpace, what: str) -> np.ndarray:
    missing = [w for w, _ in rows if w not in embeddings]
    if missing:
        raise ValueError(f"{len(missing)} {what} words lack embeddings, first: {missing[0]!r}")
    return np.vstack([embeddings[w] for w, _ in rows])


def train_probe(
    dataset: Sequence[Tuple[str, frozenset]],
    embeddings: EmbeddingSpace,
    lr: float = 0.01,
    epochs: int = 5,
    batch_size: int = 64,
    rng_seed: int = 0,
) -> ProbeModel:
    """One-vs-rest logistic regression over embeddings, trained with Adam.

    Uses the same optimizer and settings as the mimicking trainer
    (lr 0.01, 5 epochs, batches of 64). Datasets where every row carries
    exactly one label are scored by argmax at prediction time.
    """
    rows = [(w, frozenset(labels)) for w, labels in dataset]
    labels = sorted({lab for _, labs in rows for lab in labs})
    if len(labels) < 2:
        raise ValueError(f"degenerate probe dataset: {len(labels)} distinct label(s)")
    label_ix = {lab: i for i, lab in enumerate(labels)}
    x = _probe_matrix(rows, embeddings, "training")
    y = np.zeros((len(rows), len(labels)))
    for r, (_, labs) in enumerate(rows):
        for lab in labs:
            y[r, label_ix[lab]] = 1.0
    d = embeddings.dimension
    tensors = {"weights": np.zeros((len(labels), d)), "bias": np.zeros(len(labels))}
    state = AdamState(tensors, lr=lr, batch_size=batch_size)
    rng = np.random.default_rng(rng_seed)
    for _ in range(epochs):
        order = rng.permutation(len(rows))
        for start in range(0, len(rows), batch_size):
            idx = order[start:start + batch_size]
            xb, yb = x[idx], y[idx]
            probs = 1.0 / (1.0 + np.exp(-(xb @ tensors["weights"].T + tensors["bias"])))
            resid = probs - yb
            grads = {
                "weights": resid.T @ xb / len(idx),
                "bias": resid.mean(axis=0),
            }
            state.update(tensors, grads)
    return ProbeModel(
        labels=labels,
        weights=tensors["weights"],
        bias=tensors["bias"],
        single_label=all(len(labs) == 1 for _, labs in rows),
    )


def predict_probe(model: ProbeModel, vector: np.ndarray) -> frozenset:
    """Predicted label set: argmax for single-label models, else the labels
    with probability >= 0.5 (argmax fallback when none clear the bar)."""
    scores = model.weights @ np.asarray(vector, dtype=np.float64) + model.bias
    if model.single_label:
        return frozenset([model.labels[int(np.argmax(scores))]])
    chosen = [model.labels[i] for i, s in enumerate(scores) if s >= 0.0]
    if not chosen:
        chosen = [model.labels[int(np.argmax(scores))]]
    return frozenset(chosen)


def _score_rows(pairs) -> Tuple[float, float]:
    """Exact-match accuracy and micro-F1 over (gold_set, predicted_set) pairs."""
    exact = sum(1 for gold, pred in pairs if gold == pred)
    tp = sum(len(gold & pred) for gold, pred in pairs)
    fp = sum(len(pred - gold) for gold, pred in pairs)
    fn = sum(len(gold - pred) for gold, pred in pairs)
    accuracy = exact / len(pairs)
    micro_f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    return accuracy, micro_f1


def eval_probe(
    model: ProbeModel,
    dataset: Sequence[Tuple[str, frozenset]],
    embeddings: EmbeddingSpace,
    frequencies: Optional[Mapping[str, int]] = None,
    bins: Optional[Sequence[Tuple[int, int]]] = None,
) -> ProbeMetrics:
    """Accuracy and micro-F1, overall and per caller-supplied frequency bin.

    `bins` are half-open [low, high) intervals over word frequency; words
    missing from `frequencies` count as frequency 0.
    """
    rows = [(w, frozenset(labels)) for w, labels in dataset]
    if not rows:
        raise ValueError("empty evaluation dataset")
    known = set(model.labels)
    for w, labs in rows:
        unknown = labs - known
        if unknown:
            raise ValueError(f"label {next(iter(unknown))!r} (word {w!r}) absent from training set")
    x = _probe_matrix(rows, embeddings, "evaluation")
    pairs = [(labs, predict_probe(model, x[i])) for i, (_, labs) in enumerate(rows)]
    accuracy, micro_f1 = _score_rows(pairs)
    bin_metrics = []
    if bins:
        freqs = frequencies or {}
        for low, high in bins:
            sub = [
                pairs[i] for i, (w, _) in enumerate(rows) if low <= freqs.get(w, 0) < high
            ]
            if sub:
                acc, f1 = _score_rows(sub)
                bin_metrics.append(BinMetrics(low, high, acc, f1, len(sub)))
            else:
                bin_metrics.append(BinMetrics(low, high, None, None, 0))
    return ProbeMetrics(accuracy=accuracy, micro_f1=micro_f1, count=len(rows), bins=bin_metrics)


# ---------------------------------------------------------------------------
# Significance


def sign_test(wins: int, losses: int) -> float:
    """Two-sided exact binomial p-value for win/loss counts under p = 0.5.

    Ties must be excluded by the caller. Symmetric in (wins, losses).
    """
    if wins < 0 or losses < 0:
        raise ValueError("counts must be nonnegative")
    n = wins + losses
    if n < 1:
        raise ValueError("need at least one non-tied comparison")
    k = max(wins, losses)
    if n <= 1024:
        tail = sum(comb(n, j) for j in range(k, n + 1))
        # integer-over-integer division rounds correctly despite huge counts
        return min(1.0, (2 * tail) / (2 ** n))
    # large n: accumulate the tail pmf in floats (relative error ~1e-12)
    log_pmf = -n * np.log(2.0) + lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)
    pmf = np.exp(log_pmf)
    total = 0.0
    for j in range(k, n + 1):
        total += pmf
        pmf *= (n - j) / (j + 1)
    return min(1.0, 2.0 * total)


@dataclass
class BucketComparison:
    occurrences: int
    wins: int
    losses: int
    ties: int
    p_value: Optional[float]  # None when there is no evidence (all ties)


def compare_models(
    inferred_a: Mapping[str, np.ndarray],
    inferred_b: Mapping[str, np.ndarray],
    gold_space: EmbeddingSpace,
    amap: AlignmentMap,
    plan: DownsamplePlan,
) -> List[BucketComparison]:
    """Per-bucket sign test of model a against model b.

    A word is a win for a when a's mapped embedding is strictly closer (by
    cosine) to the gold embedding; ties are dropped before the test. Both
    models must live in the same test space (one alignment map).
    """
    results = []
    for i, words in enumerate(plan.buckets):
        wins = losses = ties = 0
        for w in words:
            va, vb, gold = inferred_a.get(w), inferred_b.get(w), gold_space.get(w)
            if va is None or vb is None:
                raise ValueError(f"model comparison: no embedding for plan word {w!r}")
            if gold is None:
                raise ValueError(f"plan word {w!r} has no gold embedding")
            ca = cosine(amap.apply(np.asarray(va, dtype=np.float64)), gold)
            cb = cosine(amap.apply(np.asarray(vb, dtype=np.float64)), gold)
            if ca > cb:
                wins += 1
            elif cb > ca:
                losses += 1
            else:
                ties += 1
        if words and wins + losses == 0:
            p = None
        elif not words:
            p = None
        else:
            p = sign_test(wins, losses)
        results.append(
            BucketComparison(occurrences=2 ** i, wins=wins, losses=losses, ties=ties, p_value=p)
        )
    return results


def format_comparison_table(comparisons: Sequence[BucketComparison]) -> str:
    header = ["occurrences", "wins", "losses", "ties", "p"]
    rows = [header]
    for c in comparisons:
        p = "no evidence" if c.p_value is None else f"{c.p_value:.4g}"
        rows.append([str(c.occurrences), str(c.wins), str(c.losses), str(c.ties), p])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(c.rjust(widths[i]) for i, c in enumerate(row)) for row in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Benchmark file formats


def load_dictionary(path) -> List[Tuple[str, str]]:
    """Alignment dictionary: one "word<TAB>word" pair per line."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'word<TAB>word'")
            pairs.append((parts[0], parts[1]))
    return pairs


def load_benchmark(path) -> List[Tuple[str, str, float]]:
    """Similarity benchmark: "word_a<TAB>word_b<TAB>gold_score" lines."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'word_a<TAB>word_b<TAB>score'")
            try:
                score = float(parts[2])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad gold score {parts[2]!r}") from None
            entries.append((parts[0], parts[1], score))
    return entries


def load_context_file(path) -> Dict[str, List[List[str]]]:
    """Context sentences for probe words: "probe_word<TAB>sentence" lines."""
    contexts: Dict[str, List[List[str]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'probe_word<TAB>sentence'")
            contexts.setdefault(parts[0], []).append(parts[1].split())
    return contexts


def load_probe_dataset(path) -> List[Tuple[str, frozenset]]:
    """Labelled words: "word<TAB>label[,label...]" lines."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[1]:
                raise ValueError(f"{path}:{lineno}: expected 'word<TAB>label[,label...]'")
            rows.append((parts[0], frozenset(parts[1].split(","))))
    return rows
