"""Mimicking trainer: instance sampling, loss, analytic gradients, Adam.

Training draws frequent words, samples 1..64 of their contexts, runs the
forward pass and minimizes the squared distance to the word's original
embedding. Context word embeddings are frozen inputs and never receive
gradient. A strictly sequential deterministic order is the default and the
only mode implemented.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import Corpus, ContextSet, extract_contexts, sample_context_set
from .embeddings import EmbeddingSpace
from .model import ForwardTrace, ModelParams, forward, init_params
from .ngrams import NgramConfig, NgramVocab, build_vocab

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"AMCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SamplerConfig:
    """Instance sampling knobs; defaults follow the training recipe."""

    min_frequency: int = 100
    per_epoch_cap: int = 5
    context_min: int = 1
    context_max: int = 64
    epochs: int = 5
    rng_seed: int = 0
    window: int = 25

    def __post_init__(self):
        if not 1 <= self.context_min <= self.context_max:
            raise ValueError("need 1 <= context_min <= context_max")
        if self.min_frequency < 1:
            raise ValueError("min_frequency must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class TrainingInstance:
    word: str
    context_set: ContextSet
    target: np.ndarray


@dataclass
class Gradients:
    """Per-tensor gradients of the mimicking loss."""

    ngram_table: np.ndarray
    context_transform: np.ndarray
    gate_weights: np.ndarray
    gate_bias: float
    attention_projection: np.ndarray


def epoch_schedule(
    corpus: Corpus,
    space: EmbeddingSpace,
    config: SamplerConfig,
    exclude=None,
) -> List[Tuple[str, int]]:
    """Words to train on and how often per epoch.

    n(w) = min(floor(f(w) / min_frequency), per_epoch_cap); words below the
    frequency floor or missing from the embedding space are dropped.
    """
    exclude = exclude or frozenset()
    schedule = []
    for word, freq in sorted(corpus.frequency_table.items()):
        if word in exclude or word not in space:
            continue
        n = min(freq // config.min_frequency, config.per_epoch_cap)
        if n >= 1:
            schedule.append((word, n))
    if not schedule:
        raise ValueError(
            f"no trainable words: none reach frequency {config.min_frequency} "
            "with an embedding in the space"
        )
    return schedule


def augment_with_targets(
    schedule: List[Tuple[str, int]],
    target_words: Sequence[str],
    corpus: Corpus,
    space: EmbeddingSpace,
    pairs_per_word: int = 5,
) -> List[Tuple[str, int]]:
    """Add `pairs_per_word` instances per target word to every epoch.

    This is the variant where downsampled words are themselves mimicked;
    their contexts come from whatever the (downsampled) corpus still holds.
    """
    for w in target_words:
        if w not in space:
            raise ValueError(f"target word {w!r} has no original embedding")
        if not any(len(c) > 0 for c in extract_contexts(corpus, w)):
            raise ValueError(f"target word {w!r} has no usable context in the corpus")
    counts = dict(schedule)
    for w in target_words:
        counts[w] = counts.get(w, 0) + pairs_per_word
    return sorted(counts.items())


def draw_context_count(config: SamplerConfig, rng) -> int:
    """Uniform draw from [context_min, context_max] inclusive."""
    rng = np.random.default_rng(rng)
    return int(rng.integers(config.context_min, config.context_max + 1))


def make_instance(
    word: str,
    corpus: Corpus,
    space: EmbeddingSpace,
    config: SamplerConfig,
    rng,
) -> Optional[TrainingInstance]:
    """Sample a context count uniformly from [context_min, context_max],
    draw that many contexts, and pair them with the word's embedding.

    Returns None (with a warning) when the word has no usable context.
    """
    rng = np.random.default_rng(rng)
    target = space.get(word)
    if target is None:
        raise ValueError(f"word {word!r} has no embedding to mimic")
    count = draw_context_count(config, rng)
    try:
        context_set = sample_context_set(corpus, word, count, rng, window=config.window)
    except ValueError:
        logger.warning("skipping %r: no extractable contexts", word)
        return None
    return TrainingInstance(word=word, context_set=context_set, target=target)


def _backward_from_trace(
    trace: ForwardTrace, target: np.ndarray, params: ModelParams
) -> Tuple[float, dict]:
    """Loss and analytic gradients for whichever branch the forward took.

    The n-gram part is returned sparsely as (ids, per_row_grad): every
    contributing occurrence adds the same per-occurrence vector to its row.
    """
    d = params.dim
    out = trace.output
    diff = out - target
    loss = float(diff @ diff)
    g_out = 2.0 * diff

    grads = {
        "context_transform": np.zeros((d, d)),
        "gate_weights": np.zeros(2 * d),
        "gate_bias": 0.0,
        "attention_projection": np.zeros((d, d)),
        "ngram": ([], np.zeros(d)),
    }

    g_ctx = None
    if trace.mode == "full":
        c = trace.context_embedding
        f = trace.form_embedding
        alpha = trace.gate
        transformed = params.context_transform @ c
        g_alpha = float(g_out @ (transformed - f))
        sig_prime = alpha * (1.0 - alpha)
        grads["context_transform"] = alpha * np.outer(g_out, c)
        grads["gate_weights"] = g_alpha * sig_prime * np.concatenate([c, f])
        grads["gate_bias"] = g_alpha * sig_prime
        g_ctx = alpha * (params.context_transform.T @ g_out) + (
            g_alpha * sig_prime
        ) * params.gate_weights[:d]
        g_form = (1.0 - alpha) * g_out + (g_alpha * sig_prime) * params.gate_weights[d:]
        if trace.ngram_ids:
            grads["ngram"] = (list(trace.ngram_ids), g_form / len(trace.ngram_ids))
    elif trace.mode == "context-only":
        c = trace.context_embedding
        grads["context_transform"] = np.outer(g_out, c)
        g_ctx = params.context_transform.T @ g_out
    else:  # form-only
        if trace.ngram_ids:
            grads["ngram"] = (list(trace.ngram_ids), g_out / len(trace.ngram_ids))

    if g_ctx is not None and not trace.uniform_weights:
        # rho_j = r_j / Z with r the row sums of the similarity matrix;
        # dL/ds_ab = (q_a - q.rho) / Z independent of b, with q_j = v_j.g_ctx
        vectors = trace.context_vectors
        rho = trace.weights
        q = vectors @ g_ctx
        proj = vectors @ params.attention_projection.T
        sims = proj @ proj.T / np.sqrt(d)
        z = float(sims.sum())
        common = (q - float(q @ rho)) / z
        t1 = np.outer(vectors.T @ common, vectors.sum(axis=0))
        grads["attention_projection"] = (
            params.attention_projection @ (t1 + t1.T) / np.sqrt(d)
        )

    return loss, grads


def loss(instance: TrainingInstance, params: ModelParams, space: EmbeddingSpace) -> float:
    """Squared Euclidean distance between the target and the forward output."""
    trace = forward(instance.word, instance.context_set.contexts, params, space)
    diff = trace.output - instance.target
    return float(diff @ diff)


def backward(
    instance: TrainingInstance, params: ModelParams, space: EmbeddingSpace
) -> Gradients:
    """Analytic gradients of the mimicking loss for one instance."""
    trace = forward(instance.word, instance.context_set.contexts, params, space)
    _, grads = _backward_from_trace(trace, instance.target, params)
    dense = np.zeros_like(params.ngram_table)
    ids, row_grad = grads["ngram"]
    if ids:
        np.add.at(dense, ids, row_grad)
    return Gradients(
        ngram_table=dense,
        context_transform=grads["context_transform"],
        gate_weights=grads["gate_weights"],
        gate_bias=grads["gate_bias"],
        attention_projection=grads["attention_projection"],
    )


class AdamState:
    """Adam moments over a named family of tensors (scalars allowed)."""

    def __init__(
        self,
        tensors: Dict[str, Union[np.ndarray, float]],
        lr: float = 0.01,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        batch_size: int = 64,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.batch_size = batch_size
        self.t = 0
        self.m = {k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in tensors.items()}

    def update(
        self,
        tensors: Dict[str, Union[np.ndarray, float]],
        grads: Dict[str, Union[np.ndarray, float]],
    ) -> Dict[str, Union[np.ndarray, float]]:
        """One bias-corrected Adam step; ndarray tensors are updated in place."""
        for name, g in grads.items():
            if not np.all(np.isfinite(np.asarray(g))):
                raise FloatingPointError(f"non-finite gradient for {name!r} at step {self.t + 1}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        out = {}
        for name, value in tensors.items():
            g = np.asarray(grads[name], dtype=np.float64)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            delta = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if isinstance(value, np.ndarray):
                value -= delta
                out[name] = value
            else:
                out[name] = float(value - delta)
        return out


def _param_tensors(params: ModelParams) -> Dict[str, Union[np.ndarray, float]]:
    return {
        "ngram_table": params.ngram_table,
        "context_transform": params.context_transform,
        "gate_weights": params.gate_weights,
        "gate_bias": params.gate_bias,
        "attention_projection": params.attention_projection,
    }


def adam_step(params: ModelParams, grads: Gradients, state: AdamState) -> ModelParams:
    """Apply one Adam step to every model tensor; arrays change in place."""
    updated = state.update(
        _param_tensors(params),
        {
            "ngram_table": grads.ngram_table,
            "context_transform": grads.context_transform,
            "gate_weights": grads.gate_weights,
            "gate_bias": grads.gate_bias,
            "attention_projection": grads.attention_projection,
        },
    )
    params.gate_bias = updated["gate_bias"]
    return params


@dataclass
class Checkpoint:
    """Trained model plus everything needed to reproduce the run."""

    params: ModelParams
    sampler: SamplerConfig
    epochs_completed: int


def train(
    corpus: Corpus,
    space: EmbeddingSpace,
    config: SamplerConfig = SamplerConfig(),
    attention_enabled: bool = True,
    target_words: Optional[Sequence[str]] = None,
    ngram_config: NgramConfig = NgramConfig(),
    lr: float = 0.01,
    batch_size: int = 64,
    exclude=None,
    log_path=None,
) -> Checkpoint:
    """Run the mimicking training loop and return a checkpoint.

    Batches of `batch_size` instances (last batch may be short) use the
    mean of the instance gradients. Everything is driven by a single seeded
    generator, so a fixed (corpus, config) pair reproduces bit-identical
    checkpoints.
    """
    schedule = epoch_schedule(corpus, space, config, exclude=exclude)
    if target_words:
        schedule = augment_with_targets(schedule, target_words, corpus, space)
    vocab = build_vocab([w for w, _ in schedule], ngram_config)
    rng = np.random.default_rng(config.rng_seed)
    params = init_params(vocab, space.dimension, rng, attention_enabled=attention_enabled)
    state = AdamState(_param_tensors(params), lr=lr, batch_size=batch_size)

    expanded = [w for w, n in schedule for _ in range(n)]
    log_lines = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(expanded))
        epoch_losses = []
        for start in range(0, len(order), batch_size):
            batch = [expanded[i] for i in order[start:start + batch_size]]
            acc = {
                "ngram_table": np.zeros_like(params.ngram_table),
                "context_transform": np.zeros((params.dim, params.dim)),
                "gate_weights": np.zeros(2 * params.dim),
                "gate_bias": 0.0,
                "attention_projection": np.zeros((params.dim, params.dim)),
            }
            used = 0
            for word in batch:
                instance = make_instance(word, corpus, space, config, rng)
                if instance is None:
                    continue
                trace = forward(instance.word, instance.context_set.contexts, params, space)
                inst_loss, grads = _backward_from_trace(trace, instance.target, params)
                if not np.isfinite(inst_loss):
                    raise FloatingPointError(f"non-finite loss on instance {word!r}")
                epoch_losses.append(inst_loss)
                ids, row_grad = grads["ngram"]
                if ids:
                    np.add.at(acc["ngram_table"], ids, row_grad)
                acc["context_transform"] += grads["context_transform"]
                acc["gate_weights"] += grads["gate_weights"]
                acc["gate_bias"] += grads["gate_bias"]
                acc["attention_projection"] += grads["attention_projection"]
                used += 1
            if used == 0:
                continue
            for key in acc:
                acc[key] = acc[key] / used
            updated = state.update(_param_tensors(params), acc)
            params.gate_bias = updated["gate_bias"]
        for name, tensor in _param_tensors(params).items():
            if not np.all(np.isfinite(np.asarray(tensor))):
                raise FloatingPointError(f"parameter {name!r} went non-finite in epoch {epoch}")
        mean_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        log_lines.append(f"{epoch}\t{mean_loss:.9g}")
        logger.info("epoch %d\tmean_loss %.6g", epoch, mean_loss)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + ("\n" if log_lines else ""))
    return Checkpoint(params=params, sampler=config, epochs_completed=config.epochs)


def _pack_array(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    head = struct.pack("<I", arr.ndim) + b"".join(struct.pack("<Q", n) for n in arr.shape)
    # ascontiguousarray promotes 0-d to 1-d, so shape comes from the original
    return head + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _unpack_array(buf: memoryview, offset: int) -> Tuple[np.ndarray, int]:
    (ndim,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    shape = []
    for _ in range(ndim):
        (n,) = struct.unpack_from("<Q", buf, offset)
        shape.append(n)
        offset += 8
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(shape)
    return data.astype(np.float64).copy(), offset + 8 * count


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    """Self-describing binary: magic, version, vocab, tensors, config."""
    p = checkpoint.params
    s = checkpoint.sampler
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    parts.append(struct.pack("<I?", p.dim, p.attention_enabled))
    cfg = p.ngram_vocab.config
    parts.append(struct.pack("<III", cfg.n_min, cfg.n_max, cfg.min_count))
    parts.append(struct.pack("<I", len(p.ngram_vocab)))
    for gram, gid in p.ngram_vocab.index.items():
        raw = gram.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw + struct.pack("<I", gid))
    for tensor in (
        p.ngram_table,
        p.context_transform,
        p.gate_weights,
        np.asarray(p.gate_bias, dtype=np.float64),
        p.attention_projection,
    ):
        parts.append(_pack_array(np.asarray(tensor)))
    parts.append(
        struct.pack(
            "<IIIIIqI",
            s.min_frequency,
            s.per_epoch_cap,
            s.context_min,
            s.context_max,
            s.epochs,
            s.rng_seed,
            s.window,
        )
    )
    parts.append(struct.pack("<I", checkpoint.epochs_completed))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        buf = memoryview(fh.read())
    if bytes(buf[:4]) != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 8
    dim, attention_enabled = struct.unpack_from("<I?", buf, offset)
    offset += 5
    n_min, n_max, min_count = struct.unpack_from("<III", buf, offset)
    offset += 12
    (vocab_size,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    index = {}
    for _ in range(vocab_size):
        (nbytes,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        gram = bytes(buf[offset:offset + nbytes]).decode("utf-8")
        offset += nbytes
        (gid,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        index[gram] = gid
    vocab = NgramVocab(NgramConfig(n_min, n_max, min_count), index)
    tensors = []
    for _ in range(5):
        arr, offset = _unpack_array(buf, offset)
        tensors.append(arr)
    mf, cap, cmin, cmax, epochs, seed, window = struct.unpack_from("<IIIIIqI", buf, offset)
    offset += 32
    (epochs_completed,) = struct.unpack_from("<I", buf, offset)
    params = ModelParams(
        dim=dim,
        ngram_vocab=vocab,
        ngram_table=tensors[0],
        context_transform=tensors[1],
        gate_weights=tensors[2],
        gate_bias=float(tensors[3]),
        attention_projection=tensors[4],
        attention_enabled=bool(attention_enabled),
    )
    sampler = SamplerConfig(
        min_frequency=mf,
        per_epoch_cap=cap,
        context_min=cmin,
        context_max=cmax,
        epochs=epochs,
        rng_seed=seed,
        window=window,
    )
    return Checkpoint(params=params, sampler=sampler, epochs_completed=epochs_completed)
