"""Shell out to the grafting tool for every initialization.

The harness never computes transfer weights itself: grafted and random
baseline checkpoints both come from the `tokengraft` command line, so
this package is a genuinely independent consumer of the tool and its
file formats.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

GRAFT_COMMAND = (sys.executable, "-m", "tokengraft.cli")


def _run(arguments: list[str]) -> subprocess.CompletedProcess:
    command = [*GRAFT_COMMAND, *arguments]
    completed = subprocess.run(command, capture_output=True, text=True)
    if completed.returncode != 0:
        raise RuntimeError(
            f"grafting tool failed (exit {completed.returncode}): "
            f"{completed.stderr.strip() or completed.stdout.strip()}"
        )
    return completed


def graft_checkpoint(source_model, small_model, source_vocab, target_vocab, out_path) -> Path:
    """Transferred initialization for the large target model."""
    _run(
        [
            "transfer",
            "--source-model", str(source_model),
            "--small-target-model", str(small_model),
            "--source-vocab", str(source_vocab),
            "--target-vocab", str(target_vocab),
            "--out", str(out_path),
        ]
    )
    return Path(out_path)


def baseline_checkpoint(
    source_model, small_model, source_vocab, target_vocab, out_path, *, seed: int
) -> Path:
    """Random-embedding baseline with everything else identical."""
    _run(
        [
            "transfer",
            "--source-model", str(source_model),
            "--small-target-model", str(small_model),
            "--source-vocab", str(source_vocab),
            "--target-vocab", str(target_vocab),
            "--out", str(out_path),
            "--baseline", "random",
            "--seed", str(seed),
        ]
    )
    return Path(out_path)


def measure_overlap(source_vocab, target_vocab, out_dir) -> float:
    """Overlap ratio (source denominator) as the tool reports it."""
    out_dir = Path(out_dir)
    _run(
        [
            "overlap",
            "--source-vocab", str(source_vocab),
            "--target-vocab", str(target_vocab),
            "--out", str(out_dir),
        ]
    )
    report = json.loads((out_dir / "overlap_report.json").read_text(encoding="utf-8"))
    return float(report["ratio"])
