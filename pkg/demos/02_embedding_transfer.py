"""Graft a big model's embeddings onto a new vocabulary.

Given a large model in a source language and a small model in the
target language, build the embedding matrix for a large target-language
model: shared tokens keep their source rows verbatim, and every other
row becomes a similarity-weighted average of shared rows, with the
weights read off the small model's embedding space.

Run:  python3 demos/02_embedding_transfer.py
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from tokengraft import (
    TransferConfig,
    Vocabulary,
    compute_overlap,
    delta_weights,
    open_checkpoint,
    read_matrix,
    transfer_checkpoint,
    write_checkpoint,
)

SOURCE_SURFACES = ["the", "of", "and", "house", "dog", "tree", "water", "sky"]
TARGET_SURFACES = ["the", "und", "of", "haus", "and", "wasser"]


def synthesize_checkpoints(workdir: Path):
    """A 'trained' large source model and small target model."""
    rng = np.random.default_rng(42)
    h_large, h_small = 16, 6

    source_path = workdir / "large_source.ckpt"
    write_checkpoint(
        [
            ("wte.weight", "F32", (len(SOURCE_SURFACES), h_large),
             rng.normal(size=(len(SOURCE_SURFACES), h_large)).astype(np.float32)),
            ("h.0.attn.weight", "F32", (h_large, h_large),
             rng.normal(size=(h_large, h_large)).astype(np.float32)),
            ("h.0.mlp.weight", "F32", (h_large, 4 * h_large),
             rng.normal(size=(h_large, 4 * h_large)).astype(np.float32)),
        ],
        source_path,
        metadata={"role": "large source-language model"},
    )

    small_path = workdir / "small_target.ckpt"
    write_checkpoint(
        [
            ("wte.weight", "F32", (len(TARGET_SURFACES), h_small),
             rng.normal(size=(len(TARGET_SURFACES), h_small)).astype(np.float32)),
        ],
        small_path,
        metadata={"role": "small target-language model"},
    )
    return source_path, small_path


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="transfer-demo-"))
    source_path, small_path = synthesize_checkpoints(workdir)
    source_vocab = Vocabulary.from_surfaces(SOURCE_SURFACES)
    target_vocab = Vocabulary.from_surfaces(TARGET_SURFACES)

    overlap = compute_overlap(source_vocab, target_vocab)
    shared = [target_vocab.surface(int(t)) for t in overlap.target_ids]
    missing = [target_vocab.surface(int(t)) for t in overlap.missing_target_ids]
    print(f"shared tokens:  {shared}")
    print(f"missing tokens: {missing}")

    # Inspect the mixing weights for one missing token before running
    # the full transfer. Weights live on a simplex: nonnegative, sum 1.
    with open_checkpoint(small_path) as small_bundle:
        small_emb = read_matrix(small_bundle, "wte.weight")
    missing_id = int(overlap.missing_target_ids[0])
    wv = delta_weights(missing_id, overlap, small_emb, TransferConfig())
    print(f"\nmixing weights for {target_vocab.surface(missing_id)!r}:")
    for position, weight in zip(wv.pair_positions, wv.weights):
        donor = source_vocab.surface(int(overlap.source_ids[int(position)]))
        print(f"  {weight:.3f} x {donor!r}")
    print(f"  sum = {wv.weights.sum():.6f}")

    out_path = workdir / "large_target.ckpt"
    with open_checkpoint(source_path) as sb, open_checkpoint(small_path) as tb:
        result = transfer_checkpoint(
            sb, tb, source_vocab, target_vocab, out_path=out_path
        )
        source_emb = read_matrix(sb, "wte.weight")

    print(f"\ntransfer report: {json.dumps(result.report)}")
    print(f"copied unchanged: {result.copied_tensor_names}")

    with open_checkpoint(out_path) as out:
        grafted = read_matrix(out, "wte.weight")
    copies_exact = np.array_equal(
        grafted[overlap.target_ids], source_emb[overlap.source_ids]
    )
    print(f"shared rows bit-identical to source: {copies_exact}")
    print(f"grafted checkpoint: {out_path}")
    print(f"  shape {grafted.shape}, ready for fine-tuning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
