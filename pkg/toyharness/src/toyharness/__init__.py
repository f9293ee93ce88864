"""Desk-scale evidence that grafted embeddings beat random ones.

Builds paired synthetic corpora, trains tiny decoder models, asks the
grafting tool for transferred and baseline initializations, and races
them on the target corpus.
"""

from .comparison import ComparisonResult, CurveSeries, run_comparison, train_curve
from .corpora import CorpusFiles, ToyCorpusSpec, make_corpora
from .grafting import baseline_checkpoint, graft_checkpoint, measure_overlap
from .tensorfile import read_tensors, write_tensors
from .trainer import TinyDecoderLM, TrainOutcome, load_model, train_toy_lm

__version__ = "0.1.0"

__all__ = [
    "ComparisonResult",
    "CorpusFiles",
    "CurveSeries",
    "TinyDecoderLM",
    "ToyCorpusSpec",
    "TrainOutcome",
    "baseline_checkpoint",
    "graft_checkpoint",
    "load_model",
    "make_corpora",
    "measure_overlap",
    "read_tensors",
    "run_comparison",
    "train_curve",
    "train_toy_lm",
    "write_tensors",
    "__version__",
]
