"""Command-line front end: overlap analysis, kNN audit, checkpoint transfer.

Three subcommands wire the library into batch workflows:

  tokengraft overlap    --source-vocab A --target-vocab B [--denominator ...]
  tokengraft knn-audit  --a CKPT --b CKPT --k 10
  tokengraft transfer   --source-model CKPT --small-target-model CKPT
                        --source-vocab A --target-vocab B --out CKPT

Every run writes machine-readable reports plus a manifest recording the
command, the resolved configuration, and content digests of all inputs
and outputs, so any artifact can be traced back to exact input bytes.
Outputs carry no timestamps: identical inputs give bit-identical files.

Exit codes: 0 success, 2 usage error, 3 parse or I/O error, 4 numeric
failure.

A flat key=value file passed via --config supplies defaults for any
optional flag of the subcommand; flags given on the command line take
precedence.  The TOKENGRAFT_THREADS environment variable caps the
numeric thread pool (it must be honored before the numeric stack loads,
which is why this module and the package __init__ import lazily).
"""

from __future__ import annotations

import os

_threads = os.environ.get("TOKENGRAFT_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericsError, ParseError
from .neighbors import knn_overlap_counts
from .tensor_io import find_embedding_tensor, open_checkpoint, read_matrix
from .transfer import (
    FALLBACK_POLICIES,
    HEAD_POLICIES,
    WEIGHT_MODES,
    TransferConfig,
    transfer_checkpoint,
)
from .vocab import FORMATS, CanonicalizationPolicy, compute_overlap, load_vocab, overlap_ratio

SAMPLE_TOKENS = 20


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, document: dict) -> None:
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(path: Path, command: str, config: dict, inputs, outputs) -> None:
    _write_json(
        path,
        {
            "command": command,
            "config": config,
            "inputs": {str(p): _sha256(Path(p)) for p in inputs},
            "outputs": {str(p): _sha256(Path(p)) for p in outputs},
            "tool_version": __version__,
        },
    )


def _policy(canonicalize: str) -> CanonicalizationPolicy:
    mode = "none" if canonicalize == "none" else "unify-whitespace-marker"
    return CanonicalizationPolicy(mode=mode)


def cmd_overlap(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    source = load_vocab(args.source_vocab, format=args.format)
    target = load_vocab(args.target_vocab, format=args.format)
    overlap = compute_overlap(source, target, _policy(args.canonicalize))

    ratios = {
        name: overlap_ratio(overlap, name, len(source), len(target))
        for name in ("source", "target", "union")
    }
    ratio = ratios[args.denominator]
    report = {
        "source_vocab": str(args.source_vocab),
        "target_vocab": str(args.target_vocab),
        "source_size": len(source),
        "target_size": len(target),
        "overlapping": overlap.n_pairs,
        "missing": int(overlap.missing_target_ids.size),
        "canonicalize": args.canonicalize,
        "denominator": args.denominator,
        "ratio": ratio,
        "percent": f"{100.0 * ratio:.2f}%",
        "ratios": ratios,
        "sample_overlapping": [
            target.surface(int(t)) for t in overlap.target_ids[:SAMPLE_TOKENS]
        ],
        "sample_missing": [
            target.surface(int(t)) for t in overlap.missing_target_ids[:SAMPLE_TOKENS]
        ],
    }
    report_path = out_dir / "overlap_report.json"
    _write_json(report_path, report)
    _write_manifest(
        out_dir / "manifest.json",
        "overlap",
        {
            "format": args.format,
            "canonicalize": args.canonicalize,
            "denominator": args.denominator,
        },
        [args.source_vocab, args.target_vocab],
        [report_path],
    )
    print(report["percent"])
    return 0


def cmd_knn_audit(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open_checkpoint(args.a) as bundle_a, open_checkpoint(args.b) as bundle_b:
        name_a, _, _ = find_embedding_tensor(bundle_a, args.tensor)
        name_b, _, _ = find_embedding_tensor(bundle_b, args.tensor)
        matrix_a = read_matrix(bundle_a, name_a)
        matrix_b = read_matrix(bundle_b, name_b)

    counts = knn_overlap_counts(matrix_a, matrix_b, args.k)
    score = int(counts.sum()) / (counts.size * args.k)
    histogram = np.bincount(counts, minlength=args.k + 1)

    report_path = out_dir / "knn_audit.json"
    _write_json(
        report_path,
        {
            "checkpoint_a": str(args.a),
            "checkpoint_b": str(args.b),
            "tensor_a": name_a,
            "tensor_b": name_b,
            "rows": int(counts.size),
            "k": args.k,
            "exclude_self": True,
            "score": score,
        },
    )
    histogram_path = out_dir / "knn_histogram.csv"
    lines = ["neighbor_overlap,token_count"]
    lines += [f"{value},{int(histogram[value])}" for value in range(args.k + 1)]
    histogram_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    _write_manifest(
        out_dir / "manifest.json",
        "knn-audit",
        {"k": args.k, "tensor": args.tensor},
        [args.a, args.b],
        [report_path, histogram_path],
    )
    print(f"{score:.4f}")
    return 0


def cmd_transfer(args) -> int:
    out_ckpt = Path(args.out)
    report_path = Path(str(out_ckpt) + ".report.json")
    manifest_path = Path(str(out_ckpt) + ".manifest.json")
    try:
        source_vocab = load_vocab(args.source_vocab, format=args.format)
        target_vocab = load_vocab(args.target_vocab, format=args.format)
        config = TransferConfig(
            weight_mode=args.weight_mode,
            temperature=args.temperature,
            top_k=args.top_k,
            fallback=args.fallback,
            seed=args.seed,
            head_policy=args.head,
        )
        baseline = {"random": "random-normal", "source-mean": "source-mean"}.get(args.baseline)
        out_ckpt.parent.mkdir(parents=True, exist_ok=True)

        with open_checkpoint(args.source_model) as source_bundle, open_checkpoint(
            args.small_target_model
        ) as small_bundle:
            result = transfer_checkpoint(
                source_bundle,
                small_bundle,
                source_vocab,
                target_vocab,
                config,
                out_path=out_ckpt,
                policy=_policy(args.canonicalize),
                source_embedding_hint=args.embedding_tensor,
                small_embedding_hint=args.small_embedding_tensor,
                baseline=baseline,
                out_dtype={"f32": "F32", "source": "source"}[args.out_dtype],
            )
            copied_checksums = {
                name: hashlib.sha256(source_bundle.tensor_bytes(name)).hexdigest()
                for name in result.copied_tensor_names
            }

        _write_json(
            report_path,
            {
                "out": str(out_ckpt),
                "counts": {
                    "copied": result.report["copied"],
                    "constructed": result.report["constructed"],
                    "fallback_used": result.report["fallback_used"],
                },
                "weight_mode": result.report["weight_mode"],
                "input_tensor": result.input_tensor_name,
                "head_tensor": result.head_tensor_name,
                "tied": result.tied,
                "fallback_token_surfaces": [
                    target_vocab.surface(i) for i in result.fallback_missing_ids
                ],
                "copied_tensor_checksums": copied_checksums,
            },
        )
        _write_manifest(
            manifest_path,
            "transfer",
            {
                "weight_mode": args.weight_mode,
                "temperature": args.temperature,
                "top_k": args.top_k,
                "fallback": args.fallback,
                "seed": args.seed,
                "head": args.head,
                "baseline": args.baseline,
                "out_dtype": args.out_dtype,
                "format": args.format,
                "canonicalize": args.canonicalize,
            },
            [args.source_model, args.small_target_model, args.source_vocab, args.target_vocab],
            [out_ckpt, report_path],
        )
    except BaseException:
        # Never leave a half-written checkpoint behind.
        for path in (out_ckpt, report_path, manifest_path):
            path.unlink(missing_ok=True)
        raise
    counts = result.report
    print(
        f"copied {counts['copied']} rows, constructed {counts['constructed']} rows, "
        f"{counts['fallback_used']} fallback(s)"
    )
    print(str(out_ckpt))
    return 0


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="tokengraft",
        description=__doc__.splitlines()[0],
        epilog="Set TOKENGRAFT_THREADS to cap the numeric thread pool.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subcommands = parser.add_subparsers(dest="subcommand", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", help="flat key=value file supplying defaults for optional flags")

    overlap = subcommands.add_parser("overlap", help="vocabulary overlap statistics")
    overlap.add_argument("--source-vocab", required=True)
    overlap.add_argument("--target-vocab", required=True)
    overlap.add_argument("--format", choices=("auto",) + FORMATS, default="auto")
    overlap.add_argument("--canonicalize", choices=("none", "whitespace"), default="none")
    overlap.add_argument("--denominator", choices=("source", "target", "union"), default="source")
    overlap.add_argument("--out", default=".", help="directory for report and manifest")
    common(overlap)
    overlap.set_defaults(func=cmd_overlap)
    registry["overlap"] = overlap

    audit = subcommands.add_parser("knn-audit", help="embedding-space neighbor agreement")
    audit.add_argument("--a", required=True, help="first checkpoint")
    audit.add_argument("--b", required=True, help="second checkpoint")
    audit.add_argument("--tensor", help="embedding tensor name or name fragment")
    audit.add_argument("--k", type=int, required=True, help="neighbor-set size")
    audit.add_argument("--out", default=".", help="directory for reports and manifest")
    common(audit)
    audit.set_defaults(func=cmd_knn_audit)
    registry["knn-audit"] = audit

    transfer = subcommands.add_parser("transfer", help="build a target-vocabulary checkpoint")
    transfer.add_argument("--source-model", required=True)
    transfer.add_argument("--small-target-model", required=True)
    transfer.add_argument("--source-vocab", required=True)
    transfer.add_argument("--target-vocab", required=True)
    transfer.add_argument("--out", required=True, help="output checkpoint path")
    transfer.add_argument("--format", choices=("auto",) + FORMATS, default="auto")
    transfer.add_argument("--canonicalize", choices=("none", "whitespace"), default="none")
    transfer.add_argument("--weight-mode", choices=WEIGHT_MODES, default="clamped-normalized")
    transfer.add_argument("--temperature", type=float, default=1.0)
    transfer.add_argument("--top-k", type=int, default=None)
    transfer.add_argument("--fallback", choices=FALLBACK_POLICIES, default="uniform-over-top1")
    transfer.add_argument("--head", choices=HEAD_POLICIES, default="auto")
    transfer.add_argument("--baseline", choices=("random", "source-mean"), default=None)
    transfer.add_argument("--seed", type=int, default=0)
    transfer.add_argument("--embedding-tensor", help="source embedding tensor name or fragment")
    transfer.add_argument("--small-embedding-tensor", help="small-model embedding tensor name or fragment")
    transfer.add_argument("--out-dtype", choices=("f32", "source"), default="f32")
    common(transfer)
    transfer.set_defaults(func=cmd_transfer)
    registry["transfer"] = transfer

    return parser, registry


def _apply_config_defaults(argv: list[str], registry: dict[str, argparse.ArgumentParser]) -> None:
    """Load --config key=value pairs as subparser defaults.

    Explicit command-line flags win because defaults only fill in
    missing flags.  Unknown keys are usage errors.
    """
    path = None
    for position, token in enumerate(argv):
        if token == "--config" and position + 1 < len(argv):
            path = argv[position + 1]
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
    if path is None:
        return
    subcommand = next((token for token in argv if not token.startswith("-")), None)
    sub = registry.get(subcommand or "")
    if sub is None:
        return  # argparse will report the unknown subcommand itself

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config file {path}: {exc}") from None
    actions = {action.dest: action for action in sub._actions}
    defaults = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("help", "config", "func"):
            raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
        value = action.type(raw) if callable(action.type) else raw
        if action.choices is not None and value not in action.choices:
            raise ValueError(
                f"{path}:{line_no}: {key!r} must be one of {tuple(action.choices)}, got {raw!r}"
            )
        defaults[dest] = value
    sub.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    try:
        _apply_config_defaults(argv, registry)
        args = parser.parse_args(argv)
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
