"""Embedding inference for rare and novel words, with its benchmark harness.

A trained model reproduces pre-trained embeddings of frequent words from
their character n-grams plus attention-weighted context averages, then
infers embeddings for words too rare for standard training. The harness
builds downsampled benchmark corpora, aligns embedding spaces with an
orthogonal map, and scores models by bucketed cosine similarity, rank
correlation, linear probes, and sign tests.
"""

__version__ = "0.1.0"

from .corpus import (
    Context,
    ContextSet,
    Corpus,
    DownsamplePlan,
    apply_downsample,
    build_downsample_plan,
    context_from_tokens,
    count_frequencies,
    extract_contexts,
    load_plan,
    sample_context_set,
    save_plan,
)
from .embeddings import EmbeddingSpace, average, cosine, load_text, save_text
from .evaluation import (
    AlignmentMap,
    AlignmentReport,
    compare_models,
    eval_probe,
    eval_similarity,
    fit_alignment,
    score_alignment,
    sign_test,
    spearman,
    train_probe,
)
from .model import (
    ForwardTrace,
    ModelParams,
    combine,
    combine_with_original,
    context_embedding,
    context_similarity,
    context_vector,
    gate,
    infer,
    init_params,
    reliability_weights,
    trace_lines,
)
from .ngrams import NgramConfig, NgramVocab, build_vocab, extract_ngrams, form_embedding
from .training import (
    AdamState,
    Checkpoint,
    Gradients,
    SamplerConfig,
    TrainingInstance,
    adam_step,
    augment_with_targets,
    backward,
    epoch_schedule,
    load_checkpoint,
    loss,
    make_instance,
    save_checkpoint,
    train,
)
