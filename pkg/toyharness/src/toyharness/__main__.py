"""End-to-end experiment runner.

    python3 -m toyharness --rho 0.5 --seeds 1 2 3 --out runs/demo

Builds the corpora, pretrains the large source model and the small
target model, then compares grafted against random initialization on
the target language.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .comparison import run_comparison
from .corpora import ToyCorpusSpec, make_corpora
from .grafting import measure_overlap
from .trainer import train_toy_lm


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="toyharness", description=__doc__.splitlines()[0])
    parser.add_argument("--rho", type=float, default=0.5, help="vocabulary overlap fraction")
    parser.add_argument("--corpus-seed", type=int, default=1)
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    parser.add_argument("--pretrain-steps", type=int, default=1200)
    parser.add_argument("--steps", type=int, default=400, help="comparison training steps")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)

    out_dir = Path(args.out)
    spec = ToyCorpusSpec(overlap_fraction=args.rho, seed=args.corpus_seed)
    corpus = make_corpora(spec, out_dir / "corpora")
    ratio = measure_overlap(corpus.source_vocab, corpus.target_vocab, out_dir / "overlap")
    print(f"requested overlap {args.rho:.2f}, measured {ratio:.4f}")

    print(f"pretraining large source model ({args.pretrain_steps} steps)")
    source = train_toy_lm(
        corpus.source_corpus, corpus.source_vocab, "large", args.pretrain_steps,
        out_dir / "source_large.ckpt",
    )
    print(f"  train loss {source.initial_train_loss:.3f} -> {source.final_train_loss:.3f}")

    print(f"pretraining small target model ({args.pretrain_steps} steps)")
    small = train_toy_lm(
        corpus.target_corpus, corpus.target_vocab, "small", args.pretrain_steps,
        out_dir / "small_target.ckpt",
    )
    print(f"  train loss {small.initial_train_loss:.3f} -> {small.final_train_loss:.3f}")

    print(f"comparing initializations ({len(args.seeds)} seeds x {args.steps} steps)")
    result = run_comparison(
        source.checkpoint, small.checkpoint, corpus, args.steps, args.seeds,
        out_dir / "comparison",
    )
    for check in result.checks:
        outcome = "lower" if check["grafted_lower"] else "NOT lower"
        print(
            f"  seed {check['seed']} at {int(100 * check['fraction'])}% of training: "
            f"grafted {check['grafted_loss']:.3f} vs random {check['random_loss']:.3f} "
            f"({outcome})"
        )
    print(f"verdict: grafted lower in {result.passed}/{result.total} checks")
    print(f"curves: {result.curves_path}")
    print(f"plot:   {result.plot_path}")
    return 0 if result.passed == result.total else 1


if __name__ == "__main__":
    sys.exit(main())
