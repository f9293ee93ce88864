"""Paired synthetic corpora with a controlled vocabulary overlap.

Two artificial "languages" realize the same latent Markov process over
a shared symbol inventory. A fraction of symbols keeps one spelling in
both languages; the rest are spelled per language. Shared symbols
therefore play identical distributional roles, which is exactly the
situation embedding grafting exploits.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

TOKENS_PER_LINE = 32
SUCCESSORS = 4
SUCCESSOR_PROBS = (0.55, 0.25, 0.15, 0.05)


@dataclass(frozen=True)
class ToyCorpusSpec:
    """Recipe for one source/target corpus pair.

    overlap_fraction is the requested share of vocabulary spelled
    identically in both languages; the realized share lands within
    half a token of overlap_fraction * vocab_size.
    """

    overlap_fraction: float
    seed: int
    vocab_size: int = 96
    corpus_tokens: int = 120_000

    def __post_init__(self):
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ValueError(f"overlap_fraction must be in [0, 1], got {self.overlap_fraction}")
        if self.vocab_size < 8:
            raise ValueError(f"vocab_size must be at least 8, got {self.vocab_size}")
        if self.corpus_tokens <= 0:
            raise ValueError(f"corpus_tokens must be positive, got {self.corpus_tokens}")

    @property
    def n_shared(self) -> int:
        return round(self.overlap_fraction * self.vocab_size)


@dataclass(frozen=True)
class CorpusFiles:
    source_corpus: Path
    target_corpus: Path
    source_vocab: Path
    target_vocab: Path
    spec: ToyCorpusSpec


def _surfaces(spec: ToyCorpusSpec, language: str) -> list[str]:
    """Spelling of each latent symbol in one language."""
    prefix = {"source": "src", "target": "tgt"}[language]
    return [
        f"sh{latent:03d}" if latent < spec.n_shared else f"{prefix}{latent:03d}"
        for latent in range(spec.vocab_size)
    ]


def _transition_table(spec: ToyCorpusSpec, rng: np.random.Generator) -> np.ndarray:
    """Each latent symbol gets a few preferred successors."""
    table = np.empty((spec.vocab_size, SUCCESSORS), dtype=np.int64)
    for latent in range(spec.vocab_size):
        table[latent] = rng.choice(spec.vocab_size, size=SUCCESSORS, replace=False)
    return table


def _latent_stream(spec: ToyCorpusSpec, table: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    state = int(rng.integers(spec.vocab_size))
    choices = rng.choice(SUCCESSORS, size=spec.corpus_tokens, p=SUCCESSOR_PROBS)
    stream = np.empty(spec.corpus_tokens, dtype=np.int64)
    for position, choice in enumerate(choices):
        stream[position] = state
        state = int(table[state, choice])
    return stream


def _write_corpus(path: Path, stream: np.ndarray, surfaces: list[str]) -> None:
    lines = []
    for start in range(0, stream.size, TOKENS_PER_LINE):
        chunk = stream[start : start + TOKENS_PER_LINE]
        lines.append(" ".join(surfaces[latent] for latent in chunk))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def make_corpora(spec: ToyCorpusSpec, out_dir) -> CorpusFiles:
    """Write corpus and vocab files for both languages.

    Deterministic for a fixed spec: byte-identical files every run.
    Vocab files use the one-surface-per-line format; token id equals
    line number, and each language shuffles ids independently so the
    shared symbols land on different ids in the two files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    chain_rng = np.random.default_rng([spec.seed, 0])
    table = _transition_table(spec, chain_rng)
    streams = {
        "source": _latent_stream(spec, table, np.random.default_rng([spec.seed, 1])),
        "target": _latent_stream(spec, table, np.random.default_rng([spec.seed, 2])),
    }

    paths = {}
    for index, language in enumerate(("source", "target")):
        spelled = _surfaces(spec, language)
        order = np.random.default_rng([spec.seed, 3 + index]).permutation(spec.vocab_size)
        vocab_path = out_dir / f"{language}.vocab"
        vocab_path.write_text(
            "\n".join(spelled[latent] for latent in order) + "\n", encoding="utf-8"
        )
        corpus_path = out_dir / f"{language}.corpus"
        _write_corpus(corpus_path, streams[language], spelled)
        paths[language] = (corpus_path, vocab_path)

    return CorpusFiles(
        source_corpus=paths["source"][0],
        target_corpus=paths["target"][0],
        source_vocab=paths["source"][1],
        target_vocab=paths["target"][1],
        spec=spec,
    )
