"""Quantify how similar two embedding spaces are.

Absolute coordinates of embedding spaces are not comparable across
models, but neighborhoods are: if 'cat' sits next to 'dog' in both
spaces, they encode similar structure. The audit retrieves each token's
k nearest neighbors by cosine similarity in both spaces and counts the
agreement, averaged over the vocabulary.

Run:  python3 demos/03_neighbor_audit.py
"""

import sys

import numpy as np

from tokengraft import knn, knn_overlap_counts, knn_overlap_score


def rotate_and_perturb(matrix: np.ndarray, noise: float, seed: int) -> np.ndarray:
    """A second 'model' of the same tokens: rotated coordinates plus noise.

    Rotation changes every coordinate but no cosine geometry, so any
    score drop comes from the noise alone.
    """
    rng = np.random.default_rng(seed)
    square = rng.normal(size=(matrix.shape[1], matrix.shape[1]))
    rotation, _ = np.linalg.qr(square)
    rotated = matrix @ rotation.astype(matrix.dtype)
    return (rotated + noise * rng.normal(size=matrix.shape)).astype(np.float32)


def main() -> int:
    rng = np.random.default_rng(7)
    vocab_size, hidden = 256, 24
    reference = rng.normal(size=(vocab_size, hidden)).astype(np.float32)

    print(f"reference space: {vocab_size} tokens, {hidden} dimensions")
    neighbors = knn(reference, query_id=0, k=5)
    print(f"token 0 nearest neighbors: {list(neighbors.neighbor_ids)}")

    print("\nagreement against increasingly corrupted copies (k=10):")
    print(f"  {'noise':>6}  {'score':>6}")
    for noise in (0.0, 0.05, 0.2, 0.5, 2.0):
        other = rotate_and_perturb(reference, noise, seed=11)
        score = knn_overlap_score(reference, other, k=10)
        print(f"  {noise:>6.2f}  {score:>6.3f}")

    # A pure rotation scores 1.0: cosine neighborhoods are unchanged.
    # Strong noise drives the score toward chance level, roughly
    # k / (vocab_size - 1).
    chance = 10 / (vocab_size - 1)
    print(f"\nchance level at this size: {chance:.3f}")

    # The per-token counts behind the score tell you where the spaces
    # disagree; here is the distribution for moderate noise.
    other = rotate_and_perturb(reference, 0.2, seed=11)
    counts = knn_overlap_counts(reference, other, k=10)
    histogram = np.bincount(counts, minlength=11)
    print("\nshared-neighbor histogram at noise 0.2:")
    for shared, tokens in enumerate(histogram):
        bar = "#" * int(round(50 * tokens / vocab_size))
        print(f"  {shared:>2}/10 shared: {tokens:>4} tokens {bar}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
