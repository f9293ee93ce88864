"""Cosine-similarity kernels and the k-nearest-neighbor agreement audit.

The audit answers one question about two embedding matrices over the
same vocabulary: for each token, how many of its k nearest neighbors
(by cosine similarity) agree between the two matrices?  The mean
agreement over all tokens is a scalar in [0, 1]; 1.0 means the two
spaces rank neighborhoods identically.

Determinism rules, applied everywhere:

  * neighbors are ordered by descending similarity, ties broken by
    ascending token id;
  * a zero-norm row has similarity 0 to everything;
  * the query token itself is excluded by default (a self-neighbor
    would inflate every agreement score by 1/k without carrying any
    information).

Kernels are blocked dense matrix products over immutable inputs, so
they are safe to call from multiple threads and the BLAS layer is free
to parallelize within a call.  No approximate index is used: results
are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BLOCK_ROWS = 1024


@dataclass(frozen=True)
class NeighborSet:
    """k nearest neighbors of one query token.

    neighbor_ids are sorted by descending similarity, ties by ascending
    id, so equal inputs always produce the identical tuple.
    """

    query_id: int
    k: int
    neighbor_ids: tuple[int, ...]
    exclude_self: bool

    def __post_init__(self):
        if len(self.neighbor_ids) != self.k:
            raise ValueError(f"expected {self.k} neighbor ids, got {len(self.neighbor_ids)}")
        if self.exclude_self and self.query_id in self.neighbor_ids:
            raise ValueError("self id present in neighbor set despite exclude_self")


def _as_matrix(matrix) -> np.ndarray:
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError(f"embedding matrix must be rank-2, got shape {m.shape}")
    return m


def _unit_rows(matrix: np.ndarray, dtype) -> np.ndarray:
    """Rows scaled to unit norm; zero rows stay zero."""
    m = np.ascontiguousarray(matrix, dtype=dtype)
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    safe = np.where(norms == 0.0, 1.0, norms)
    return m / safe[:, None].astype(dtype, copy=False)


def cosine_similarities(matrix, query_id: int, candidate_ids) -> np.ndarray:
    """Cosine similarity of one row against a list of candidate rows.

    Returns a float64 array aligned to ``candidate_ids``.  Values are
    clamped to [-1, 1]; pairs involving a zero-norm vector score 0.
    """
    m = _as_matrix(matrix)
    rows = m.shape[0]
    ids = np.asarray(candidate_ids, dtype=np.int64)
    if not (0 <= query_id < rows):
        raise ValueError(f"query id {query_id} out of range for {rows} rows")
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        raise ValueError(f"candidate id out of range for {rows} rows")

    query = m[query_id].astype(np.float64)
    cands = m[ids].astype(np.float64)
    qn = np.sqrt(query @ query)
    cn = np.sqrt(np.einsum("ij,ij->i", cands, cands))
    denom = qn * cn
    sims = np.zeros(ids.size, dtype=np.float64)
    nonzero = denom > 0.0
    if nonzero.any():
        sims[nonzero] = (cands[nonzero] @ query) / denom[nonzero]
    return np.clip(sims, -1.0, 1.0)


def _check_k(k: int, rows: int, exclude_self: bool) -> None:
    limit = rows - 1 if exclude_self else rows
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if k > limit:
        raise ValueError(
            f"k={k} exceeds the {limit} available candidates ({rows} rows, "
            f"exclude_self={exclude_self})"
        )


def knn(matrix, query_id: int, k: int, exclude_self: bool = True) -> NeighborSet:
    """The k most cosine-similar rows to ``matrix[query_id]``."""
    m = _as_matrix(matrix)
    rows = m.shape[0]
    if not (0 <= query_id < rows):
        raise ValueError(f"query id {query_id} out of range for {rows} rows")
    _check_k(k, rows, exclude_self)

    query = m[query_id].astype(np.float64)
    qn = np.sqrt(query @ query)
    sims = np.empty(rows, dtype=np.float64)
    block = max(1, DEFAULT_BLOCK_ROWS * 4)
    for start in range(0, rows, block):
        chunk = m[start : start + block].astype(np.float64)
        norms = np.sqrt(np.einsum("ij,ij->i", chunk, chunk))
        denom = qn * norms
        dots = chunk @ query
        np.divide(dots, denom, out=dots, where=denom > 0.0)
        dots[denom == 0.0] = 0.0
        sims[start : start + block] = dots
    if exclude_self:
        sims[query_id] = -np.inf

    # Stable sort on the negated similarities: equal scores keep their
    # original (ascending id) order, which is exactly the tie rule.
    order = np.argsort(-sims, kind="stable")[:k]
    return NeighborSet(int(query_id), int(k), tuple(int(i) for i in order), exclude_self)


def _topk_membership(sims: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of each row's k highest entries, ties by low index.

    The kth-largest value is found by partitioning, then border entries
    equal to it are admitted in ascending index order until k per row.
    Equivalent to a full (-value, index) sort but O(n) per row.
    """
    n = sims.shape[1]
    kth = np.partition(sims, n - k, axis=1)[:, n - k : n - k + 1]
    greater = sims > kth
    border = sims == kth
    need = k - greater.sum(axis=1, keepdims=True, dtype=np.int32)
    border_rank = np.cumsum(border, axis=1, dtype=np.int32)
    return greater | (border & (border_rank <= need))


def knn_overlap_counts(
    a,
    b,
    k: int,
    exclude_self: bool = True,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> np.ndarray:
    """Per-token |N_v(a) ∩ N_v(b)| for neighbor sets of size k.

    Both matrices must describe the same vocabulary (equal row counts);
    hidden sizes may differ.  Returns an int64 array of length rows.
    """
    ma = _as_matrix(a)
    mb = _as_matrix(b)
    if ma.shape[0] != mb.shape[0]:
        raise ValueError(
            f"row-count mismatch: {ma.shape[0]} vs {mb.shape[0]} (the audit pairs "
            "tokens by row index, so both matrices must cover the same vocabulary)"
        )
    rows = ma.shape[0]
    _check_k(k, rows, exclude_self)

    na = _unit_rows(ma, np.float32)
    nb = _unit_rows(mb, np.float32)
    counts = np.empty(rows, dtype=np.int64)
    minus_inf = np.float32(-np.inf)
    for start in range(0, rows, block_rows):
        stop = min(start + block_rows, rows)
        sims_a = na[start:stop] @ na.T
        sims_b = nb[start:stop] @ nb.T
        if exclude_self:
            diag = np.arange(start, stop)
            sims_a[diag - start, diag] = minus_inf
            sims_b[diag - start, diag] = minus_inf
        mask = _topk_membership(sims_a, k)
        mask &= _topk_membership(sims_b, k)
        counts[start:stop] = mask.sum(axis=1)
    return counts


def knn_overlap_score(
    a,
    b,
    k: int,
    exclude_self: bool = True,
    block_rows: int = DEFAULT_BLOCK_ROWS,
) -> float:
    """Mean neighbor agreement over all tokens, in [0, 1].

    Identical inputs score exactly 1.0: the tie rule makes neighbor
    sets deterministic, and the count arithmetic is integer.
    """
    counts = knn_overlap_counts(a, b, k, exclude_self=exclude_self, block_rows=block_rows)
    return int(counts.sum()) / (counts.size * k)
