"""Train grafted and random initializations side by side.

Both arms start from checkpoints produced by the grafting tool (one
transferred, one with random embeddings), then train with identical
data order. The comparison records validation-loss curves, renders a
plot, and issues a verdict: is the grafted arm strictly better at the
start, a quarter, and half of training, for every seed?
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import torch

from . import grafting
from .corpora import CorpusFiles
from .trainer import (
    SEQ_LEN,
    _fixed_windows,
    encode_corpus,
    evaluate,
    load_model,
    run_training,
    split_train_val,
)

VERDICT_FRACTIONS = (0.0, 0.25, 0.5)
EVAL_GRID = 8  # evaluations per run, evenly spaced


@dataclass(frozen=True)
class CurveSeries:
    """One training run's validation trajectory."""

    label: str
    points: tuple[tuple[int, float], ...]  # (tokens_consumed, validation_loss)
    eval_steps: tuple[int, ...]

    def __post_init__(self):
        tokens = [t for t, _ in self.points]
        if any(b <= a for a, b in zip(tokens, tokens[1:])):
            raise ValueError(f"{self.label}: tokens_consumed must be strictly increasing")
        if len(self.points) != len(self.eval_steps):
            raise ValueError(f"{self.label}: one point per evaluation step expected")

    def loss_at_step(self, step: int) -> float:
        return self.points[self.eval_steps.index(step)][1]


@dataclass(frozen=True)
class ComparisonResult:
    curves: tuple[CurveSeries, ...]
    checks: tuple[dict, ...]
    passed: int
    total: int
    curves_path: Path
    plot_path: Path
    verdict_path: Path


def train_curve(
    init_checkpoint,
    corpus_path,
    vocab_path,
    steps: int,
    seed: int,
    *,
    label: str,
    batch_size: int = 16,
    lr: float = 3e-4,
) -> CurveSeries:
    """Fine-tune one initialization, sampling validation loss on a grid.

    Runs with the same (steps, seed, batch_size, lr) consume identical
    batches, so two curves differ only through their checkpoints.
    """
    if steps % EVAL_GRID:
        raise ValueError(f"steps must be a multiple of {EVAL_GRID}, got {steps}")
    ids = encode_corpus(corpus_path, vocab_path)
    train_ids, val_ids = split_train_val(ids)
    val_windows = _fixed_windows(val_ids)

    torch.manual_seed(seed)
    model, _ = load_model(init_checkpoint)
    grid = range(0, steps + 1, steps // EVAL_GRID)
    points = []

    def on_eval(step: int) -> None:
        if step in grid:
            points.append((step * batch_size * SEQ_LEN, evaluate(model, val_windows)))

    run_training(
        model, train_ids, steps, seed, batch_size=batch_size, lr=lr, on_eval=on_eval
    )
    return CurveSeries(label=label, points=tuple(points), eval_steps=tuple(grid))


def _write_curves(path: Path, curves) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label", "tokens_consumed", "validation_loss"])
        for curve in curves:
            for tokens, loss in curve.points:
                writer.writerow([curve.label, tokens, f"{loss:.6f}"])


def _plot_curves(path: Path, curves) -> None:
    figure, axes = plt.subplots(figsize=(7, 4.5))
    for curve in curves:
        tokens = [t for t, _ in curve.points]
        losses = [l for _, l in curve.points]
        style = "-" if curve.label.startswith("grafted") else "--"
        axes.plot(tokens, losses, style, label=curve.label)
    axes.set_xlabel("tokens consumed")
    axes.set_ylabel("validation loss")
    axes.set_title("grafted vs random embedding initialization")
    axes.legend(fontsize=8)
    figure.tight_layout()
    figure.savefig(path, dpi=120)
    plt.close(figure)


def run_comparison(
    source_large_ckpt,
    small_target_ckpt,
    corpus: CorpusFiles,
    steps: int,
    seeds,
    out_dir,
    *,
    batch_size: int = 16,
    lr: float = 3e-4,
) -> ComparisonResult:
    """Full experiment: graft, baseline, train both, judge.

    The grafted checkpoint is built once (the tool is deterministic);
    the random baseline is rebuilt per seed. Every (seed, fraction)
    pair contributes one check: grafted validation loss strictly below
    random at that fraction of training.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grafted_init = grafting.graft_checkpoint(
        source_large_ckpt, small_target_ckpt,
        corpus.source_vocab, corpus.target_vocab,
        out_dir / "grafted_init.ckpt",
    )

    curves: list[CurveSeries] = []
    checks: list[dict] = []
    for seed in seeds:
        random_init = grafting.baseline_checkpoint(
            source_large_ckpt, small_target_ckpt,
            corpus.source_vocab, corpus.target_vocab,
            out_dir / f"random_init_seed{seed}.ckpt",
            seed=seed,
        )
        arms = {}
        for name, init in (("grafted", grafted_init), ("random", random_init)):
            arms[name] = train_curve(
                init, corpus.target_corpus, corpus.target_vocab, steps, seed,
                label=f"{name}/seed{seed}", batch_size=batch_size, lr=lr,
            )
            curves.append(arms[name])
        for fraction in VERDICT_FRACTIONS:
            mark = int(steps * fraction)
            grafted_loss = arms["grafted"].loss_at_step(mark)
            random_loss = arms["random"].loss_at_step(mark)
            checks.append(
                {
                    "seed": seed,
                    "fraction": fraction,
                    "step": mark,
                    "grafted_loss": round(grafted_loss, 6),
                    "random_loss": round(random_loss, 6),
                    "grafted_lower": grafted_loss < random_loss,
                }
            )

    curves_path = out_dir / "curves.csv"
    plot_path = out_dir / "comparison.png"
    verdict_path = out_dir / "verdict.json"
    _write_curves(curves_path, curves)
    _plot_curves(plot_path, curves)
    passed = sum(check["grafted_lower"] for check in checks)
    verdict_path.write_text(
        json.dumps(
            {"checks": checks, "passed": passed, "total": len(checks)},
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return ComparisonResult(
        curves=tuple(curves),
        checks=tuple(checks),
        passed=passed,
        total=len(checks),
        curves_path=curves_path,
        plot_path=plot_path,
        verdict_path=verdict_path,
    )
