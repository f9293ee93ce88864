"""tokengraft: cross-vocabulary checkpoint surgery.

The package initializes a large target-vocabulary model checkpoint from
a large source-vocabulary checkpoint plus a small target-vocabulary
checkpoint, and ships the two diagnostics that justify the construction:
vocabulary overlap statistics and a k-nearest-neighbor agreement audit
between embedding spaces.

Submodules are imported lazily so that the command-line entry point can
apply the TOKENGRAFT_THREADS override before the numeric stack
initializes its thread pools.
"""

from __future__ import annotations

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "GraftError": "errors",
    "ParseError": "errors",
    "NumericsError": "errors",
    "Token": "vocab",
    "Vocabulary": "vocab",
    "CanonicalizationPolicy": "vocab",
    "OverlapMap": "vocab",
    "detect_convention": "vocab",
    "load_vocab": "vocab",
    "compute_overlap": "vocab",
    "overlap_ratio": "vocab",
    "TensorRecord": "tensor_io",
    "CheckpointBundle": "tensor_io",
    "open_checkpoint": "tensor_io",
    "write_checkpoint": "tensor_io",
    "read_matrix": "tensor_io",
    "find_embedding_tensor": "tensor_io",
    "NeighborSet": "neighbors",
    "cosine_similarities": "neighbors",
    "knn": "neighbors",
    "knn_overlap_counts": "neighbors",
    "knn_overlap_score": "neighbors",
    "TransferConfig": "transfer",
    "WeightVector": "transfer",
    "TransferResult": "transfer",
    "delta_weights": "transfer",
    "construct_missing_embedding": "transfer",
    "build_target_embeddings": "transfer",
    "baseline_init": "transfer",
    "transfer_checkpoint": "transfer",
}

__all__ = ["__version__", *sorted(_EXPORTS)]


def __getattr__(name: str):
    try:
        module_name = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}") from None
    value = getattr(import_module(f".{module_name}", __name__), name)
    globals()[name] = value
    return value


def __dir__() -> list[str]:
    return sorted(set(globals()) | set(_EXPORTS))
