"""Forward pass: context vectors, reliability attention, gate, combination.

A word's inferred embedding mixes two branches. The form branch averages
learned character n-gram embeddings. The context branch averages the
per-context mean vectors, either uniformly or weighted by learned
reliability scores (scaled dot-product agreement between contexts). A
sigmoid gate alpha picks the mix and a square matrix transforms the
context branch:

    output = alpha * A @ v_context + (1 - alpha) * v_form
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .corpus import Context, ContextSet
from .embeddings import EmbeddingSpace
from .ngrams import NgramVocab, form_embedding, init_table

MODES = ("full", "context-only", "form-only")

# |Z| below this times m^2 triggers the uniform-weights fallback: the
# normalizer is a sum of signed similarities and can vanish.
Z_EPSILON = 1e-8


@dataclass
class ModelParams:
    """All learnable tensors plus the attention on/off flag."""

    dim: int
    ngram_vocab: NgramVocab
    ngram_table: np.ndarray          # (|vocab|, d) surface-form rows
    context_transform: np.ndarray    # (d, d) applied to the context branch
    gate_weights: np.ndarray         # (2d,) over [context; form]
    gate_bias: float
    attention_projection: np.ndarray  # (d, d) inside the similarity score
    attention_enabled: bool = True

    def check_shapes(self):
        d = self.dim
        assert self.ngram_table.shape == (len(self.ngram_vocab), d)
        assert self.context_transform.shape == (d, d)
        assert self.gate_weights.shape == (2 * d,)
        assert self.attention_projection.shape == (d, d)


def init_params(
    vocab: NgramVocab, dim: int, rng, attention_enabled: bool = True
) -> ModelParams:
    """Identity transforms, zero gate, small random n-gram rows.

    The initial model averages contexts with a 50/50 gate, so the gate and
    attention only depart from that once training finds them useful.
    """
    return ModelParams(
        dim=dim,
        ngram_vocab=vocab,
        ngram_table=init_table(vocab, dim, rng),
        context_transform=np.eye(dim),
        gate_weights=np.zeros(2 * dim),
        gate_bias=0.0,
        attention_projection=np.eye(dim),
        attention_enabled=attention_enabled,
    )


@dataclass
class ForwardTrace:
    """Everything the forward pass produced, for inspection and backprop."""

    context_vectors: np.ndarray            # (m, d) usable contexts only
    weights: np.ndarray                    # (m,) reliability weights
    context_embedding: Optional[np.ndarray]
    form_embedding: Optional[np.ndarray]
    gate: Optional[float]
    output: np.ndarray
    mode: str                              # branch that actually ran
    uniform_weights: bool                  # True when attention was not used
    skipped_contexts: int                  # contexts with no known words
    ngram_ids: List[int] = field(default_factory=list)


def context_vector(context: Context, space: EmbeddingSpace) -> Tuple[np.ndarray, bool]:
    """Mean embedding of the context words present in the space.

    Words missing from the space are skipped. Returns (vector, usable);
    a context whose words are all unknown yields zeros and usable=False.
    """
    rows = [space.get(t) for t in context.tokens]
    rows = [r for r in rows if r is not None]
    if not rows:
        return np.zeros(space.dimension), False
    return np.mean(rows, axis=0), True


def context_similarity(v1: np.ndarray, v2: np.ndarray, projection: np.ndarray) -> float:
    """Scaled dot product of the projected context vectors: (Mv1).(Mv2)/sqrt(d)."""
    d = v1.shape[0]
    return float((projection @ v1) @ (projection @ v2) / np.sqrt(d))


def _reliability(vectors: np.ndarray, projection: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Reliability weights over the rows of `vectors`; (weights, fell_back)."""
    m, d = vectors.shape
    if m == 1:
        return np.ones(1), False
    proj = vectors @ projection.T
    sims = proj @ proj.T / np.sqrt(d)
    row_sums = sims.sum(axis=1)
    z = float(row_sums.sum())
    if abs(z) < Z_EPSILON * m * m:
        return np.full(m, 1.0 / m), True
    return row_sums / z, False


def reliability_weights(context_vectors, projection: np.ndarray) -> np.ndarray:
    """Normalized reliability of each context among its peers.

    Each weight is the context's summed similarity to all contexts
    (self-similarity included) divided by the grand sum Z, so weights sum
    to one; they may be negative. Near-zero Z falls back to uniform.
    """
    vectors = np.atleast_2d(np.asarray(context_vectors, dtype=np.float64))
    weights, _ = _reliability(vectors, projection)
    return weights


def context_embedding(context_vectors, weights) -> np.ndarray:
    """Weighted sum of context vectors; uniform weights give the plain mean."""
    vectors = np.atleast_2d(np.asarray(context_vectors, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != vectors.shape[0]:
        raise ValueError(
            f"{vectors.shape[0]} context vectors but {len(weights)} weights"
        )
    return weights @ vectors


def gate(v_context: np.ndarray, v_form: np.ndarray, weights: np.ndarray, bias: float) -> float:
    """Sigmoid mixing coefficient over the concatenated [context; form]."""
    score = weights @ np.concatenate([v_context, v_form]) + bias
    return float(1.0 / (1.0 + np.exp(-score)))


def combine(
    v_context: np.ndarray, v_form: np.ndarray, alpha: float, transform: np.ndarray
) -> np.ndarray:
    """alpha * A @ v_context + (1 - alpha) * v_form; A touches only the context branch."""
    return alpha * (transform @ v_context) + (1.0 - alpha) * v_form


def forward(
    word: str,
    contexts: Tuple[Context, ...],
    params: ModelParams,
    space: EmbeddingSpace,
    mode: str = "full",
) -> ForwardTrace:
    """Run the requested branch, degrading gracefully in full mode.

    Full mode with no usable context falls back to the form branch; a
    formless word falls back to the context branch. A word that is both
    formless and contextless cannot be embedded and raises.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    d = params.dim

    usable = []
    skipped = 0
    for ctx in contexts:
        vec, ok = context_vector(ctx, space)
        if ok:
            usable.append(vec)
        else:
            skipped += 1
    vectors = np.vstack(usable) if usable else np.empty((0, d))

    ids: List[int] = []
    v_form = None
    formless = True
    if mode != "context-only":
        ids = params.ngram_vocab.ids(word)
        vec, formless = form_embedding(word, params.ngram_vocab, params.ngram_table)
        v_form = vec

    branch = mode
    if mode == "full":
        if formless and len(usable) == 0:
            raise ValueError(f"word {word!r} is formless and has no usable context")
        if formless:
            branch = "context-only"
        elif len(usable) == 0:
            branch = "form-only"
    elif mode == "context-only" and len(usable) == 0:
        raise ValueError(f"context-only inference for {word!r} needs a usable context")
    elif mode == "form-only" and formless:
        raise ValueError(f"form-only inference impossible: {word!r} is formless")

    weights = np.empty(0)
    v_ctx = None
    uniform = True
    if branch in ("full", "context-only"):
        if params.attention_enabled:
            weights, fell_back = _reliability(vectors, params.attention_projection)
            # rho is constant in M for a single context or after the Z fallback
            uniform = fell_back or len(usable) == 1
        else:
            weights = np.full(len(usable), 1.0 / len(usable))
        v_ctx = context_embedding(vectors, weights)

    if branch == "full":
        alpha = gate(v_ctx, v_form, params.gate_weights, params.gate_bias)
        output = combine(v_ctx, v_form, alpha, params.context_transform)
    elif branch == "context-only":
        alpha = None
        output = params.context_transform @ v_ctx
        v_form = None
        ids = []
    else:
        alpha = None
        output = v_form.copy()

    return ForwardTrace(
        context_vectors=vectors,
        weights=weights,
        context_embedding=v_ctx,
        form_embedding=v_form,
        gate=alpha,
        output=output,
        mode=branch,
        uniform_weights=uniform,
        skipped_contexts=skipped,
        ngram_ids=ids,
    )


def infer(
    word: str,
    context_set: Optional[ContextSet],
    params: ModelParams,
    space: EmbeddingSpace,
    mode: str = "full",
) -> Tuple[np.ndarray, ForwardTrace]:
    """Embed `word` from its surface form and/or sampled contexts."""
    contexts = context_set.contexts if context_set is not None else ()
    trace = forward(word, contexts, params, space, mode=mode)
    return trace.output, trace


def combine_with_original(
    v_inferred: np.ndarray,
    v_original: Optional[np.ndarray],
    frequency: float,
    f_cap: float = 32.0,
) -> np.ndarray:
    """Frequency-gated blend of inferred and original embeddings.

    beta falls linearly from 1 at frequency 0 to 0 at `f_cap` and stays 0
    beyond, so rare words keep the inferred vector and frequent words keep
    their original one.
    """
    if frequency < 0:
        raise ValueError(f"frequency must be >= 0, got {frequency}")
    beta = max(0.0, 1.0 - frequency / f_cap)
    if beta >= 1.0:
        return np.asarray(v_inferred, dtype=np.float64).copy()
    if v_original is None:
        raise ValueError(
            f"original embedding required to blend at frequency {frequency} (beta={beta:g})"
        )
    return beta * np.asarray(v_inferred, dtype=np.float64) + (1.0 - beta) * np.asarray(
        v_original, dtype=np.float64
    )


def trace_lines(trace: ForwardTrace) -> List[str]:
    """Attention weights as "context_index<TAB>weight" lines."""
    return [f"{i}\t{w:.9g}" for i, w in enumerate(trace.weights)]
