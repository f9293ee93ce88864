"""Embedding transfer across vocabularies and checkpoint assembly.

Given a large checkpoint over a source vocabulary and a small checkpoint
over the target vocabulary, this module builds a large target-vocabulary
embedding matrix:

  * a token present in both vocabularies keeps its large source
    embedding, copied bit-for-bit;
  * a token missing from the source vocabulary is synthesized as a
    weighted average of the large source embeddings of overlap tokens,
    with weights derived from cosine similarities measured in the small
    model's embedding space, normalized per missing token.

All other tensors of the source checkpoint are carried over unchanged.
The result is an initialization for training a large target-vocabulary
model, plus two reference baselines for controlled comparisons.

Weight modes
------------
clamped-normalized (default)
    Negative similarities are clamped to zero before normalizing, so
    every synthesized row is a convex combination of source rows.
raw-normalized
    Similarities are normalized by their signed sum; weights may be
    negative.  Kept as the literal reading of "normalized similarity".
softmax
    exp(s/T) normalization; always well defined for T > 0.

When a token's weights degenerate (no positive similarity in clamped
mode, or a cancelled sum in raw mode), the fallback policy either puts
weight 1 on the single most similar overlap token or raises, per
configuration; every fallback is counted and reported.

Internals accumulate in float64 regardless of input dtype so that the
weights are reproducible to ~1e-15 and insensitive to benign rescaling
of the small embedding matrix.  Outputs are float32.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError, ParseError
from .neighbors import _topk_membership, _unit_rows
from .tensor_io import (
    CheckpointBundle,
    find_embedding_tensor,
    read_matrix,
    write_checkpoint,
)
from .vocab import CanonicalizationPolicy, OverlapMap, Vocabulary, compute_overlap

logger = logging.getLogger(__name__)

WEIGHT_MODES = ("clamped-normalized", "raw-normalized", "softmax")
FALLBACK_POLICIES = ("uniform-over-top1", "error")
HEAD_POLICIES = ("auto", "tied", "untied")
BASELINE_MODES = ("random-normal", "source-mean")

# A signed similarity sum closer to zero than this is treated as
# cancelled: dividing by it would amplify noise past any useful scale.
RAW_SUM_EPSILON = 1e-12

DEFAULT_BLOCK_ROWS = 2048


@dataclass(frozen=True)
class TransferConfig:
    """Knobs for the embedding synthesis.

    temperature applies to softmax mode only; top_k, when set, restricts
    each missing token's weights to its top_k most similar overlap
    tokens (ties by ascending pair position).  seed feeds the baseline
    initializers and nothing else.
    """

    weight_mode: str = "clamped-normalized"
    temperature: float = 1.0
    top_k: int | None = None
    fallback: str = "uniform-over-top1"
    seed: int = 0
    head_policy: str = "auto"

    def __post_init__(self):
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}, got {self.weight_mode!r}")
        if not (float(self.temperature) > 0.0):
            raise ValueError(f"temperature must be positive, got {self.temperature!r}")
        if self.top_k is not None and (not isinstance(self.top_k, int) or self.top_k < 1):
            raise ValueError(f"top_k must be a positive integer or None, got {self.top_k!r}")
        if self.fallback not in FALLBACK_POLICIES:
            raise ValueError(f"fallback must be one of {FALLBACK_POLICIES}, got {self.fallback!r}")
        if self.head_policy not in HEAD_POLICIES:
            raise ValueError(f"head_policy must be one of {HEAD_POLICIES}, got {self.head_policy!r}")


@dataclass(frozen=True)
class WeightVector:
    """Mixing weights of one missing token over the overlap pairs.

    Sparse: only non-zero weights are stored, each tagged with the pair
    position it applies to.
    """

    missing_id: int
    pair_positions: np.ndarray
    weights: np.ndarray
    used_fallback: bool

    def dense(self, n_pairs: int) -> np.ndarray:
        out = np.zeros(n_pairs, dtype=np.float64)
        out[self.pair_positions] = self.weights
        return out


@dataclass
class TransferResult:
    """Outcome of a checkpoint transfer."""

    embeddings: np.ndarray
    report: dict
    copied_tensor_names: list[str]
    input_tensor_name: str
    head_tensor_name: str | None
    tied: bool
    fallback_missing_ids: list[int] = field(default_factory=list)


def _pair_arrays(overlap: OverlapMap) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.asarray(overlap.pairs, dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError(f"overlap pairs must have shape (n, 2), got {pairs.shape}")
    return pairs[:, 0], pairs[:, 1]


def _weights_block(sims: np.ndarray, config: TransferConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-row weights over overlap positions for a block of similarities.

    Returns (weights, fallback_mask), both float64.  Rows flagged in
    fallback_mask already hold their fallback weights (single 1.0 on
    the most similar position) unless the config says to raise instead.
    """
    block, n_pairs = sims.shape
    if config.top_k is not None and config.top_k < n_pairs:
        allowed = _topk_membership(sims, config.top_k)
    else:
        allowed = np.ones_like(sims, dtype=bool)

    fallback_mask = np.zeros(block, dtype=bool)
    if config.weight_mode == "clamped-normalized":
        vals = np.where(allowed, np.maximum(sims, 0.0), 0.0)
        totals = vals.sum(axis=1)
        fallback_mask = totals <= 0.0
        safe = np.where(fallback_mask, 1.0, totals)
        weights = vals / safe[:, None]
    elif config.weight_mode == "raw-normalized":
        vals = np.where(allowed, sims, 0.0)
        totals = vals.sum(axis=1)
        fallback_mask = np.abs(totals) < RAW_SUM_EPSILON
        safe = np.where(fallback_mask, 1.0, totals)
        weights = vals / safe[:, None]
    else:  # softmax: exp is positive, so the sum never degenerates
        masked = np.where(allowed, sims, -np.inf)
        peaks = masked.max(axis=1, keepdims=True)
        exps = np.exp((masked - peaks) / float(config.temperature))
        exps[~allowed] = 0.0
        weights = exps / exps.sum(axis=1, keepdims=True)

    if fallback_mask.any():
        if config.fallback == "error":
            raise NumericsError(
                f"degenerate similarity weights for {int(fallback_mask.sum())} "
                "missing token(s) and fallback policy is 'error'"
            )
        rows = np.flatnonzero(fallback_mask)
        masked = np.where(allowed[rows], sims[rows], -np.inf)
        best = np.argmax(masked, axis=1)  # first max: lowest pair position wins ties
        weights[rows] = 0.0
        weights[rows, best] = 1.0
    return weights, fallback_mask


def delta_weights(
    missing_id: int,
    overlap: OverlapMap,
    small_target_emb,
    config: TransferConfig = TransferConfig(),
) -> WeightVector:
    """Similarity weights of one missing token over the overlap set.

    Similarities are cosines between the missing token's row and each
    overlap token's row in the small embedding matrix; normalization is
    per missing token, per the configured weight mode.
    """
    target_ids, _ = _pair_arrays(overlap)
    if target_ids.size == 0:
        raise NumericsError("empty overlap: no tokens shared between the vocabularies")
    missing_arr = np.asarray(overlap.missing_target_ids, dtype=np.int64)
    if not np.any(missing_arr == missing_id):
        raise ValueError(f"token id {missing_id} is not a missing target token")
    small = np.asarray(small_target_emb)

    query = _unit_rows(small[np.asarray([missing_id])].astype(np.float64), np.float64)
    keys = _unit_rows(small[target_ids].astype(np.float64), np.float64)
    sims = query @ keys.T
    weights, fb = _weights_block(sims, config)
    positions = np.flatnonzero(weights[0] != 0.0)
    return WeightVector(
        missing_id=int(missing_id),
        pair_positions=positions,
        weights=weights[0, positions].copy(),
        used_fallback=bool(fb[0]),
    )


def construct_missing_embedding(
    weights: WeightVector,
    overlap: OverlapMap,
    source_large_emb,
) -> np.ndarray:
    """Weighted average of large source rows selected by the overlap pairs.

    Returns a float64 vector of the source hidden size.
    """
    _, source_ids = _pair_arrays(overlap)
    if weights.pair_positions.size and weights.pair_positions.max() >= source_ids.size:
        raise ValueError("weight positions exceed the overlap pair count")
    source = np.asarray(source_large_emb)
    rows = source[source_ids[weights.pair_positions]].astype(np.float64)
    out = weights.weights.astype(np.float64) @ rows if rows.size else np.zeros(source.shape[1])
    if not np.isfinite(out).all():
        raise NumericsError(
            f"constructed embedding for token id {weights.missing_id} is not finite"
        )
    return out


def _validate_partition(target_vocab_size: int, target_ids, missing_ids) -> None:
    combined = np.concatenate([target_ids, missing_ids])
    if combined.size != target_vocab_size or not np.array_equal(
        np.sort(combined), np.arange(target_vocab_size, dtype=np.int64)
    ):
        raise ValueError(
            "overlap pairs plus missing ids must partition the target id range "
            f"0..{target_vocab_size - 1}"
        )


def _build_from_sources(
    target_vocab_size: int,
    overlap: OverlapMap,
    sources: list[np.ndarray],
    small_target_emb,
    config: TransferConfig,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> tuple[list[np.ndarray], dict, list[int]]:
    """Shared builder: one weight computation applied to several source
    matrices (used to rebuild an untied output head without recomputing
    similarities)."""
    target_ids, source_ids = _pair_arrays(overlap)
    if target_ids.size == 0:
        raise NumericsError("empty overlap: no tokens shared between the vocabularies")
    missing_ids = np.asarray(overlap.missing_target_ids, dtype=np.int64)
    _validate_partition(target_vocab_size, target_ids, missing_ids)

    small = np.asarray(small_target_emb)
    if small.ndim != 2 or small.shape[0] != target_vocab_size:
        raise ValueError(
            f"small embedding matrix has {small.shape[0] if small.ndim == 2 else '?'} rows, "
            f"expected the target vocabulary size {target_vocab_size}"
        )
    outs = []
    overlaps64 = []
    for source in sources:
        src32 = np.ascontiguousarray(np.asarray(source), dtype=np.float32)
        if source_ids.size and source_ids.max() >= src32.shape[0]:
            raise ValueError("overlap source ids exceed the source matrix row count")
        out = np.zeros((target_vocab_size, src32.shape[1]), dtype=np.float32)
        out[target_ids] = src32[source_ids]
        outs.append(out)
        overlaps64.append(src32[source_ids].astype(np.float64))

    keys = _unit_rows(small[target_ids].astype(np.float64), np.float64)
    fallback_ids: list[int] = []
    for start in range(0, missing_ids.size, block_rows):
        block = missing_ids[start : start + block_rows]
        queries = _unit_rows(small[block].astype(np.float64), np.float64)
        sims = queries @ keys.T
        weights, fb = _weights_block(sims, config)
        for out, ov64 in zip(outs, overlaps64):
            out[block] = (weights @ ov64).astype(np.float32)
        if fb.any():
            fallback_ids.extend(int(i) for i in block[fb])

    for out in outs:
        if not np.isfinite(out).all():
            raise NumericsError("constructed embedding matrix contains non-finite values")
    report = {
        "copied": int(target_ids.size),
        "constructed": int(missing_ids.size),
        "fallback_used": len(fallback_ids),
    }
    return outs, report, fallback_ids


def build_target_embeddings(
    target_vocab_size: int,
    overlap: OverlapMap,
    source_large_emb,
    small_target_emb,
    config: TransferConfig = TransferConfig(),
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> tuple[np.ndarray, dict]:
    """Full target embedding matrix: overlap rows copied bit-for-bit
    from the source, missing rows synthesized from similarity weights.

    Returns (float32 matrix of shape (target_vocab_size, h_source),
    report dict with copied/constructed/fallback_used counts).
    """
    outs, report, _ = _build_from_sources(
        target_vocab_size, overlap, [source_large_emb], small_target_emb, config, block_rows
    )
    return outs[0], report


def baseline_init(
    target_vocab_size: int,
    overlap: OverlapMap,
    source_large_emb,
    mode: str = "random-normal",
    seed: int = 0,
) -> np.ndarray:
    """Control initializer: overlap rows still copied from the source,
    missing rows filled without using the small model.

    random-normal draws i.i.d. N(0, 0.02); source-mean repeats the
    column mean of the overlapping source rows.  Deterministic for a
    fixed seed.
    """
    outs, _ = _baseline_from_sources(target_vocab_size, overlap, [source_large_emb], mode, seed)
    return outs[0]


def _baseline_from_sources(
    target_vocab_size: int,
    overlap: OverlapMap,
    sources: list[np.ndarray],
    mode: str,
    seed: int,
) -> tuple[list[np.ndarray], dict]:
    if mode not in BASELINE_MODES:
        raise ValueError(f"baseline mode must be one of {BASELINE_MODES}, got {mode!r}")
    target_ids, source_ids = _pair_arrays(overlap)
    if target_ids.size == 0:
        raise NumericsError("empty overlap: no tokens shared between the vocabularies")
    missing_ids = np.asarray(overlap.missing_target_ids, dtype=np.int64)
    _validate_partition(target_vocab_size, target_ids, missing_ids)

    rng = np.random.default_rng(seed)
    outs = []
    for source in sources:
        src32 = np.ascontiguousarray(np.asarray(source), dtype=np.float32)
        if source_ids.size and source_ids.max() >= src32.shape[0]:
            raise ValueError("overlap source ids exceed the source matrix row count")
        out = np.zeros((target_vocab_size, src32.shape[1]), dtype=np.float32)
        out[target_ids] = src32[source_ids]
        if mode == "random-normal":
            out[missing_ids] = rng.normal(0.0, 0.02, size=(missing_ids.size, src32.shape[1])).astype(
                np.float32
            )
        else:
            mean = src32[source_ids].astype(np.float64).mean(axis=0)
            out[missing_ids] = mean.astype(np.float32)
        outs.append(out)
    report = {"copied": int(target_ids.size), "constructed": int(missing_ids.size), "fallback_used": 0}
    return outs, report


def transfer_checkpoint(
    source_bundle: CheckpointBundle,
    small_bundle: CheckpointBundle,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    config: TransferConfig = TransferConfig(),
    *,
    out_path,
    policy: CanonicalizationPolicy | None = None,
    source_embedding_hint: str | None = None,
    small_embedding_hint: str | None = None,
    baseline: str | None = None,
    out_dtype: str = "F32",
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> TransferResult:
    """Assemble and write a large target-vocabulary checkpoint.

    The source checkpoint contributes every tensor: embeddings are
    rebuilt over the target vocabulary and all remaining tensors are
    copied byte-for-byte, preserving their dtype.  The small checkpoint
    contributes only its input embedding matrix, which must have one
    row per target token (same-language tokenizers are assumed
    identical across model sizes).

    Head handling: 'auto' ties the output projection to the input
    embedding whenever the source has no separate head tensor; 'tied'
    forces the rebuilt input matrix into any head slot; 'untied'
    requires a separate head and rebuilds it by the same procedure from
    the source head rows.  ``baseline`` swaps the synthesis for a
    control initializer (see baseline_init).

    Constructed embedding tensors are written as F32 by default;
    ``out_dtype='source'`` narrows them back to the source tensor's
    dtype with round-to-nearest-even.
    """
    if out_dtype not in ("F32", "source"):
        raise ValueError(f"out_dtype must be 'F32' or 'source', got {out_dtype!r}")
    overlap = compute_overlap(source_vocab, target_vocab, policy or CanonicalizationPolicy())

    input_name, head_name, _ = find_embedding_tensor(source_bundle, source_embedding_hint)
    small_input_name, _, _ = find_embedding_tensor(small_bundle, small_embedding_hint)

    source_emb = read_matrix(source_bundle, input_name)
    if source_emb.shape[0] != len(source_vocab.tokens):
        raise ParseError(
            f"source embedding tensor {input_name!r} has {source_emb.shape[0]} rows "
            f"but the source vocabulary has {len(source_vocab.tokens)} tokens"
        )
    small_emb = read_matrix(small_bundle, small_input_name)
    target_size = len(target_vocab.tokens)
    if small_emb.shape[0] != target_size:
        raise ParseError(
            f"small embedding tensor {small_input_name!r} has {small_emb.shape[0]} rows "
            f"but the target vocabulary has {target_size} tokens"
        )

    if config.head_policy == "auto":
        resolved_head = "tied" if head_name is None else "untied"
    else:
        resolved_head = config.head_policy
    if resolved_head == "untied" and head_name is None:
        raise ValueError(
            "head_policy 'untied' requires a separate output head tensor, "
            "but the source checkpoint ties its embeddings"
        )
    rebuild_head = resolved_head == "untied"

    head_source = None
    if rebuild_head:
        head_source = read_matrix(source_bundle, head_name)
        if head_source.shape[0] != len(source_vocab.tokens):
            raise ParseError(
                f"output head tensor {head_name!r} has {head_source.shape[0]} rows "
                f"but the source vocabulary has {len(source_vocab.tokens)} tokens"
            )

    sources = [source_emb] + ([head_source] if rebuild_head else [])
    fallback_ids: list[int] = []
    if baseline is not None:
        built, report = _baseline_from_sources(
            target_size, overlap, sources, baseline, config.seed
        )
    else:
        built, report, fallback_ids = _build_from_sources(
            target_size, overlap, sources, small_emb, config, block_rows
        )
    embeddings = built[0]
    head_matrix = built[1] if rebuild_head else embeddings

    replaced = {input_name}
    if head_name is not None:
        replaced.add(head_name)

    records = []
    copied_names = []
    for record in source_bundle.records:
        if record.name == input_name:
            dtype = record.dtype if out_dtype == "source" else "F32"
            records.append((record.name, dtype, embeddings.shape, embeddings))
        elif record.name == head_name:
            dtype = record.dtype if out_dtype == "source" else "F32"
            records.append((record.name, dtype, head_matrix.shape, head_matrix))
        else:
            records.append(
                (record.name, record.dtype, record.shape, source_bundle.tensor_bytes(record.name))
            )
            copied_names.append(record.name)
    write_checkpoint(records, out_path, metadata=source_bundle.metadata)

    report = dict(report)
    report["weight_mode"] = "baseline:" + baseline if baseline else config.weight_mode
    return TransferResult(
        embeddings=embeddings,
        report=report,
        copied_tensor_names=copied_names,
        input_tensor_name=input_name,
        head_tensor_name=head_name,
        tied=not rebuild_head,
        fallback_missing_ids=fallback_ids,
    )
