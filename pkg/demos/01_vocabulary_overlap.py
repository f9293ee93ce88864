"""Measure how much two tokenizer vocabularies share.

Two byte-pair vocabularies over related languages always share tokens:
punctuation, digits, common word pieces. This walkthrough builds two
tiny vocab files, measures their overlap, and shows why whitespace
markers need unifying before cross-family comparisons.

Run:  python3 demos/01_vocabulary_overlap.py
"""

import subprocess
import sys
import tempfile
from pathlib import Path

from tokengraft import (
    CanonicalizationPolicy,
    compute_overlap,
    load_vocab,
    overlap_ratio,
)

# One tokenizer marks word-initial pieces with Ġ (GPT-2 style),
# the other with ▁ (SentencePiece style). Same words underneath.
ENGLISH = ["the", "Ġthe", "Ġof", "Ġin", "ing", "tion", "Ġhand", "42"]
GERMAN = ["die", "▁die", "▁in", "ing", "tion", "▁hand", "▁und", "42"]


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="overlap-demo-"))
    source_path = workdir / "english.vocab"
    target_path = workdir / "german.vocab"
    source_path.write_text("\n".join(ENGLISH) + "\n", encoding="utf-8")
    target_path.write_text("\n".join(GERMAN) + "\n", encoding="utf-8")

    source = load_vocab(source_path)
    target = load_vocab(target_path)
    print(f"source vocabulary: {len(source)} tokens")
    print(f"target vocabulary: {len(target)} tokens")

    # Exact surface matching first: the marker mismatch hides shared words.
    exact = compute_overlap(source, target)
    print(f"\nexact surface match: {exact.n_pairs} shared tokens")
    for target_id, source_id in exact.pairs:
        print(f"  {target.surface(int(target_id))!r} (target {target_id} <- source {source_id})")

    # Unifying the markers recovers pieces like ' in' and ' hand'.
    policy = CanonicalizationPolicy(mode="unify-whitespace-marker")
    unified = compute_overlap(source, target, policy)
    print(f"\nwith whitespace markers unified: {unified.n_pairs} shared tokens")
    for target_id, source_id in unified.pairs:
        print(f"  {target.surface(int(target_id))!r} (target {target_id} <- source {source_id})")

    for denominator in ("source", "target", "union"):
        ratio = overlap_ratio(unified, denominator, len(source), len(target))
        print(f"overlap / {denominator:<6} = {100.0 * ratio:.2f}%")

    # The command line produces the same numbers plus a JSON report.
    print("\nsame measurement through the command line:")
    command = [
        sys.executable, "-m", "tokengraft.cli", "overlap",
        "--source-vocab", str(source_path),
        "--target-vocab", str(target_path),
        "--canonicalize", "whitespace",
        "--out", str(workdir / "report"),
    ]
    completed = subprocess.run(command, capture_output=True, text=True, check=True)
    print(f"  $ tokengraft overlap ... -> {completed.stdout.strip()}")
    print(f"  report written to {workdir / 'report' / 'overlap_report.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
