"""Tokenizer vocabulary parsing and cross-tokenizer overlap analysis.

Three on-disk formats are supported:

* ``tokenizer-descriptor`` - a JSON document with a nested model
  vocabulary map (``{"model": {"vocab": {surface: id, ...}}}``), the
  layout used by fast-tokenizer description files.  Entries from a
  top-level ``added_tokens`` list are merged in, since they are part of
  the effective vocabulary.
* ``flat-map`` - a JSON object mapping surface to id.
* ``lines`` - one surface per line; the id is the line number.

Different tokenizer families mark word-initial pieces with different
sentinel characters (byte-level BPE uses a mapped space, sentencepiece
uses a low underscore).  Comparing such vocabularies fairly requires
unifying those markers, which is what CanonicalizationPolicy controls.
Exact byte equality remains the default.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericsError, ParseError

logger = logging.getLogger(__name__)

# Marker characters BPE tokenizers prepend to word-initial pieces.
BYTE_LEVEL_SPACE_MARKER = "Ġ"  # 'G with dot' produced by byte-level BPE for 0x20
BYTE_LEVEL_NEWLINE_MARKER = "Ċ"
SENTENCEPIECE_UNDERSCORE_MARKER = "▁"
# Common sentinel both space markers are rewritten to under unification.
UNIFIED_MARKER = "␣"

CONVENTION_GPT2 = "gpt2-byte-level"
CONVENTION_SENTENCEPIECE = "sentencepiece-underscore"
CONVENTION_UNKNOWN = "unknown"

FORMATS = ("tokenizer-descriptor", "flat-map", "lines")


@dataclass(frozen=True)
class Token:
    """One vocabulary entry: a BPE piece and its id."""

    surface: str
    id: int


@dataclass
class Vocabulary:
    """Ordered token list with a surface index.

    Ids are dense (exactly 0..len-1) and surfaces are unique; both are
    enforced at construction time.
    """

    tokens: list[Token]
    index: dict[str, int] = field(repr=False)
    convention: str = CONVENTION_UNKNOWN

    def __len__(self) -> int:
        return len(self.tokens)

    def surface(self, token_id: int) -> str:
        return self.tokens[token_id].surface

    @classmethod
    def from_surfaces(cls, surfaces: list[str], convention: str | None = None) -> "Vocabulary":
        index: dict[str, int] = {}
        tokens: list[Token] = []
        for token_id, surface in enumerate(surfaces):
            if not surface:
                raise ParseError(f"empty token surface at id {token_id}")
            if surface in index:
                raise ParseError(
                    f"duplicate surface {surface!r} at ids {index[surface]} and {token_id}"
                )
            index[surface] = token_id
            tokens.append(Token(surface, token_id))
        if convention is None:
            convention = detect_convention(surfaces)
        return cls(tokens=tokens, index=index, convention=convention)


@dataclass(frozen=True)
class CanonicalizationPolicy:
    """How surfaces are normalized before cross-tokenizer comparison.

    mode ``none`` keeps exact byte equality.  mode
    ``unify-whitespace-marker`` rewrites both whitespace-marker
    conventions to UNIFIED_MARKER.  Collisions created by the rewrite
    are resolved first-occurrence-wins (lowest id) and reported as
    warnings, never as failures.
    """

    mode: str = "none"
    collision: str = "first-wins-with-warning"

    def __post_init__(self) -> None:
        if self.mode not in ("none", "unify-whitespace-marker"):
            raise ValueError(f"unknown canonicalization mode {self.mode!r}")
        if self.collision != "first-wins-with-warning":
            raise ValueError(f"unknown collision policy {self.collision!r}")

    def canonical(self, surface: str) -> str:
        if self.mode == "none":
            return surface
        return surface.replace(BYTE_LEVEL_SPACE_MARKER, UNIFIED_MARKER).replace(
            SENTENCEPIECE_UNDERSCORE_MARKER, UNIFIED_MARKER
        )


@dataclass
class OverlapMap:
    """Alignment of a target vocabulary against a source vocabulary.

    ``pairs`` is an (n, 2) int64 array of (target_id, source_id) rows
    ordered by target id; ``missing_target_ids`` holds every target id
    without a source match.  Together they partition the target ids.
    """

    pairs: np.ndarray
    missing_target_ids: np.ndarray
    policy: CanonicalizationPolicy

    @property
    def n_pairs(self) -> int:
        return int(self.pairs.shape[0])

    @property
    def target_ids(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def source_ids(self) -> np.ndarray:
        return self.pairs[:, 1]


def detect_convention(surfaces) -> str:
    """Guess the whitespace-marker convention from marker characters."""
    saw_byte_level = False
    saw_sentencepiece = False
    for surface in surfaces:
        if BYTE_LEVEL_SPACE_MARKER in surface or BYTE_LEVEL_NEWLINE_MARKER in surface:
            saw_byte_level = True
        if SENTENCEPIECE_UNDERSCORE_MARKER in surface:
            saw_sentencepiece = True
    if saw_byte_level and not saw_sentencepiece:
        return CONVENTION_GPT2
    if saw_sentencepiece and not saw_byte_level:
        return CONVENTION_SENTENCEPIECE
    return CONVENTION_UNKNOWN


def _surfaces_from_id_map(mapping: dict[str, int], origin: str) -> list[str]:
    """Turn a surface->id map into an id-ordered surface list.

    Ids must be exactly 0..n-1 with no duplicates.
    """
    n = len(mapping)
    surfaces: list[str | None] = [None] * n
    for surface, token_id in mapping.items():
        if not isinstance(token_id, int) or isinstance(token_id, bool):
            raise ParseError(f"{origin}: id for {surface!r} is not an integer")
        if token_id < 0 or token_id >= n:
            raise ParseError(
                f"{origin}: non-dense ids (id {token_id} outside 0..{n - 1})"
            )
        if surfaces[token_id] is not None:
            raise ParseError(f"{origin}: id {token_id} assigned twice")
        surfaces[token_id] = surface
    # len(mapping) unique keys filling 0..n-1 exactly means no hole remains
    return surfaces  # type: ignore[return-value]


def _sniff_format(path: Path) -> str:
    with open(path, "rb") as handle:
        head = handle.read(1)
    if head != b"{":
        return "lines"
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError:
            return "lines"
    if isinstance(doc, dict) and isinstance(doc.get("model"), dict):
        return "tokenizer-descriptor"
    return "flat-map"


def load_vocab(
    path: str | Path,
    format: str = "auto",
    convention: str | None = None,
) -> Vocabulary:
    """Parse a vocabulary file into a Vocabulary.

    ``format`` is one of FORMATS or "auto" (sniffed from content).  The
    whitespace-marker convention is detected from the surfaces unless
    ``convention`` overrides it.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"vocabulary file not found: {path}")
    if format == "auto":
        format = _sniff_format(path)
    if format not in FORMATS:
        raise ValueError(f"unknown vocabulary format {format!r}")

    if format == "lines":
        text = path.read_text(encoding="utf-8")
        surfaces = text.splitlines()
        try:
            return Vocabulary.from_surfaces(surfaces, convention)
        except ParseError as exc:
            raise ParseError(f"{path}: {exc}") from None

    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from None

    if format == "flat-map":
        if not isinstance(doc, dict) or not all(isinstance(k, str) for k in doc):
            raise ParseError(f"{path}: flat-map must be a JSON object of surface -> id")
        mapping = doc
    else:  # tokenizer-descriptor
        model = doc.get("model") if isinstance(doc, dict) else None
        if not isinstance(model, dict) or not isinstance(model.get("vocab"), dict):
            raise ParseError(f"{path}: descriptor lacks a model vocabulary map")
        mapping = dict(model["vocab"])
        for added in doc.get("added_tokens") or []:
            surface, token_id = added.get("content"), added.get("id")
            if surface is None or token_id is None:
                raise ParseError(f"{path}: malformed added_tokens entry: {added!r}")
            if mapping.get(surface, token_id) != token_id:
                raise ParseError(
                    f"{path}: added token {surface!r} conflicts with model vocabulary"
                )
            mapping[surface] = token_id

    try:
        surfaces = _surfaces_from_id_map(mapping, str(path))
        return Vocabulary.from_surfaces(surfaces, convention)
    except ParseError as exc:
        raise ParseError(str(exc) if str(exc).startswith(str(path)) else f"{path}: {exc}") from None


def _canonical_index(vocabulary: Vocabulary, policy: CanonicalizationPolicy, label: str) -> dict[str, int]:
    """Canonical surface -> lowest id, warning on every collision."""
    if policy.mode == "none":
        return vocabulary.index
    index: dict[str, int] = {}
    collisions: list[str] = []
    for token in vocabulary.tokens:
        canonical = policy.canonical(token.surface)
        if canonical in index:
            collisions.append(token.surface)
        else:
            index[canonical] = token.id
    if collisions:
        preview = ", ".join(repr(s) for s in collisions[:10])
        warnings.warn(
            f"{label} vocabulary: {len(collisions)} surfaces collided after "
            f"canonicalization (first occurrence wins): {preview}"
            + ("..." if len(collisions) > 10 else ""),
            stacklevel=3,
        )
    return index


def compute_overlap(
    source: Vocabulary,
    target: Vocabulary,
    policy: CanonicalizationPolicy | None = None,
) -> OverlapMap:
    """Partition target ids into source-matched pairs and missing ids.

    A target token pairs with the source token whose canonical surface
    matches; each source id is used at most once (first target wins on
    canonical collisions, with a warning).
    """
    if len(source) == 0 or len(target) == 0:
        raise NumericsError("compute_overlap requires non-empty vocabularies")
    policy = policy or CanonicalizationPolicy()
    source_index = _canonical_index(source, policy, "source")

    pairs: list[tuple[int, int]] = []
    missing: list[int] = []
    claimed_sources: set[int] = set()
    target_collisions: list[str] = []
    for token in target.tokens:
        source_id = source_index.get(policy.canonical(token.surface))
        if source_id is None:
            missing.append(token.id)
        elif source_id in claimed_sources:
            # Two target surfaces canonicalized onto the same source token.
            target_collisions.append(token.surface)
            missing.append(token.id)
        else:
            claimed_sources.add(source_id)
            pairs.append((token.id, source_id))
    if target_collisions:
        preview = ", ".join(repr(s) for s in target_collisions[:10])
        warnings.warn(
            f"target vocabulary: {len(target_collisions)} surfaces collided after "
            f"canonicalization and were treated as missing: {preview}"
            + ("..." if len(target_collisions) > 10 else ""),
            stacklevel=2,
        )

    pair_array = np.asarray(pairs, dtype=np.int64).reshape(len(pairs), 2)
    return OverlapMap(
        pairs=pair_array,
        missing_target_ids=np.asarray(missing, dtype=np.int64),
        policy=policy,
    )


def overlap_ratio(
    overlap: OverlapMap,
    denominator: str,
    source_size: int,
    target_size: int,
) -> float:
    """|pairs| divided by the chosen vocabulary size.

    ``denominator`` selects source, target, or union; the union size is
    source_size + target_size - |pairs|.
    """
    n_pairs = overlap.n_pairs
    if n_pairs + len(overlap.missing_target_ids) != target_size:
        raise ValueError(
            "overlap map is inconsistent with target_size="
            f"{target_size} (pairs={n_pairs}, missing={len(overlap.missing_target_ids)})"
        )
    if n_pairs > source_size:
        raise ValueError(f"overlap map has more pairs ({n_pairs}) than source_size={source_size}")
    if denominator == "source":
        size = source_size
    elif denominator == "target":
        size = target_size
    elif denominator == "union":
        size = source_size + target_size - n_pairs
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    if size == 0:
        raise NumericsError("overlap_ratio denominator is zero")
    return n_pairs / size
