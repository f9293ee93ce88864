"""Bit-exact reader/writer for the single-file named-tensor format.

File layout, little-endian throughout:

    bytes 0..8    u64 N, the header length
    bytes 8..8+N  UTF-8 JSON header
    bytes 8+N..   raw tensor payload

The header maps each tensor name to ``{"dtype", "shape",
"data_offsets"}`` where ``data_offsets`` are begin/end byte positions
relative to the payload start.  An optional ``"__metadata__"`` entry
carries a string-to-string map.  This is the layout used by the
model-sharing ecosystem's tensor files, so checkpoints written here are
readable by its standard tooling and vice versa.

Accepted dtypes are F32, F16, and BF16.  Reads validate that the
offsets tile the payload exactly (no gaps, no overlaps) and never
materialize more than one tensor at a time; the payload itself is
memory-mapped.  Writes are deterministic: same records in, same bytes
out, with no timestamps and a fixed header serialization.

Embedding matrices travel through this module as 2-D float32
``numpy.ndarray`` values: row count is the vocabulary size, column
count the hidden size, and all entries must be finite.
"""

from __future__ import annotations

import json
import mmap
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericsError, ParseError

DTYPE_WIDTHS = {"F32": 4, "F16": 2, "BF16": 2}

# Substrings identifying embedding tensors in common checkpoint layouts.
# Matching is restricted to rank-2 tensors, which keeps sibling tensors
# like embedding-layer norms (rank 1) out of the candidate set.
INPUT_EMBEDDING_NAME_HINTS = (
    "wte",
    "word_embeddings",
    "embed_tokens",
    "tok_embeddings",
    "embed_in",
    "token_embedding",
)
OUTPUT_HEAD_NAME_HINTS = ("lm_head", "embed_out", "output_embedding")


@dataclass(frozen=True)
class TensorRecord:
    """Header entry for one tensor."""

    name: str
    dtype: str
    shape: tuple[int, ...]
    data_offsets: tuple[int, int]

    @property
    def element_count(self) -> int:
        count = 1
        for extent in self.shape:
            count *= extent
        return count

    @property
    def byte_count(self) -> int:
        return self.element_count * DTYPE_WIDTHS[self.dtype]


class CheckpointBundle:
    """An opened checkpoint: ordered records plus the raw payload.

    The payload is a read-only buffer (memory-mapped for on-disk
    bundles).  Instances are immutable once constructed and safe for
    concurrent readers; close() releases the mapping.
    """

    def __init__(
        self,
        records: list[TensorRecord],
        payload,
        metadata: dict[str, str],
        _mmap: mmap.mmap | None = None,
        _file=None,
        path: Path | None = None,
    ):
        self.records = records
        self.payload = payload
        self.metadata = metadata
        self.path = path
        self._by_name = {record.name: record for record in records}
        self._mmap = _mmap
        self._file = _file

    @property
    def param_count(self) -> int:
        return sum(record.element_count for record in self.records)

    def names(self) -> list[str]:
        return [record.name for record in self.records]

    def record(self, name: str) -> TensorRecord:
        try:
            return self._by_name[name]
        except KeyError:
            raise ParseError(f"checkpoint has no tensor named {name!r}") from None

    def tensor_bytes(self, name: str):
        begin, end = self.record(name).data_offsets
        return self.payload[begin:end]

    def close(self) -> None:
        if isinstance(self.payload, memoryview):
            self.payload.release()
        if self._mmap is not None:
            self._mmap.close()
            self._mmap = None
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self) -> "CheckpointBundle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _parse_header(raw: bytes, origin: str) -> tuple[list[TensorRecord], dict[str, str], int]:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{origin}: malformed header ({exc})") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{origin}: header must be a JSON object")

    metadata = doc.pop("__metadata__", {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise ParseError(f"{origin}: __metadata__ must map strings to strings")

    records: list[TensorRecord] = []
    payload_size = 0
    for name, entry in doc.items():
        if not isinstance(entry, dict):
            raise ParseError(f"{origin}: entry for {name!r} is not an object")
        dtype = entry.get("dtype")
        if dtype not in DTYPE_WIDTHS:
            raise ParseError(f"{origin}: tensor {name!r} has unsupported dtype {dtype!r}")
        shape = entry.get("shape")
        if not isinstance(shape, list) or not all(
            isinstance(extent, int) and extent >= 0 for extent in shape
        ):
            raise ParseError(f"{origin}: tensor {name!r} has invalid shape {shape!r}")
        offsets = entry.get("data_offsets")
        if (
            not isinstance(offsets, list)
            or len(offsets) != 2
            or not all(isinstance(o, int) and o >= 0 for o in offsets)
            or offsets[0] > offsets[1]
        ):
            raise ParseError(f"{origin}: tensor {name!r} has invalid data_offsets {offsets!r}")
        record = TensorRecord(name, dtype, tuple(shape), (offsets[0], offsets[1]))
        if record.byte_count != offsets[1] - offsets[0]:
            raise ParseError(
                f"{origin}: tensor {name!r} offsets span {offsets[1] - offsets[0]} bytes "
                f"but dtype/shape require {record.byte_count}"
            )
        payload_size = max(payload_size, offsets[1])
        records.append(record)
    return records, metadata, payload_size


def _check_tiling(records: list[TensorRecord], payload_size: int, origin: str) -> None:
    spans = sorted(
        (record.data_offsets for record in records if record.byte_count > 0),
    )
    cursor = 0
    for begin, end in spans:
        if begin < cursor:
            raise ParseError(f"{origin}: overlapping tensor offsets at byte {begin}")
        if begin > cursor:
            raise ParseError(f"{origin}: payload gap between bytes {cursor} and {begin}")
        cursor = end
    if cursor != payload_size:
        raise ParseError(
            f"{origin}: payload has {payload_size} bytes but tensors cover {cursor}"
        )


def open_checkpoint(path: str | Path) -> CheckpointBundle:
    """Open and validate a checkpoint file, memory-mapping its payload."""
    path = Path(path)
    try:
        handle = open(path, "rb")
    except OSError as exc:
        raise ParseError(f"cannot open checkpoint {path}: {exc}") from None
    try:
        file_size = path.stat().st_size
        prefix = handle.read(8)
        if len(prefix) < 8:
            raise ParseError(f"{path}: file too short for a header length field")
        (header_len,) = struct.unpack("<Q", prefix)
        if 8 + header_len > file_size:
            raise ParseError(
                f"{path}: header length {header_len} exceeds file size {file_size} (truncated)"
            )
        header_raw = handle.read(header_len)
        records, metadata, declared_size = _parse_header(header_raw, str(path))

        payload_size = file_size - 8 - header_len
        if declared_size > payload_size:
            raise ParseError(
                f"{path}: truncated payload ({payload_size} bytes, header declares {declared_size})"
            )
        seen: set[str] = set()
        for record in records:
            if record.name in seen:
                raise ParseError(f"{path}: duplicate tensor name {record.name!r}")
            seen.add(record.name)
        _check_tiling(records, payload_size, str(path))

        if payload_size == 0:
            handle.close()
            return CheckpointBundle(records, b"", metadata, path=path)
        mapped = mmap.mmap(handle.fileno(), 0, access=mmap.ACCESS_READ)
        payload = memoryview(mapped)[8 + header_len :]
        return CheckpointBundle(records, payload, metadata, _mmap=mapped, _file=handle, path=path)
    except Exception:
        handle.close()
        raise


def _bf16_bits_to_f32(bits: np.ndarray) -> np.ndarray:
    widened = bits.astype(np.uint32) << np.uint32(16)
    return widened.view(np.float32)


def _f32_to_bf16_bits(values: np.ndarray) -> np.ndarray:
    """Round-to-nearest-even narrowing of float32 to bfloat16 bit patterns."""
    bits = np.ascontiguousarray(values, dtype=np.float32).view(np.uint32)
    rounding_bias = np.uint32(0x7FFF) + ((bits >> np.uint32(16)) & np.uint32(1))
    narrowed = ((bits + rounding_bias) >> np.uint32(16)).astype(np.uint16)
    nan_mask = np.isnan(values)
    if nan_mask.any():
        narrowed = np.where(
            nan_mask, (bits >> np.uint32(16)).astype(np.uint16) | np.uint16(0x0040), narrowed
        )
    return narrowed


def decode_tensor(record: TensorRecord, buffer) -> np.ndarray:
    """Decode one tensor's payload slice to a float32 array.

    F16 and BF16 widen exactly; F32 is copied verbatim.
    """
    if record.dtype == "F32":
        array = np.frombuffer(buffer, dtype="<f4").copy()
    elif record.dtype == "F16":
        array = np.frombuffer(buffer, dtype="<f2").astype(np.float32)
    else:  # BF16
        array = _bf16_bits_to_f32(np.frombuffer(buffer, dtype="<u2"))
    return array.reshape(record.shape)


def encode_tensor(values: np.ndarray, dtype: str) -> np.ndarray:
    """Encode a float array as the on-disk representation of ``dtype``.

    Narrowing conversions round to nearest, ties to even.
    """
    if dtype == "F32":
        return np.ascontiguousarray(values, dtype="<f4")
    if dtype == "F16":
        return np.ascontiguousarray(values, dtype=np.float32).astype("<f2")
    if dtype == "BF16":
        return np.ascontiguousarray(_f32_to_bf16_bits(np.ascontiguousarray(values, dtype=np.float32)))
    raise ValueError(f"unsupported dtype {dtype!r}")


def read_matrix(bundle: CheckpointBundle, name: str) -> np.ndarray:
    """Extract a rank-2 tensor as a finite float32 matrix."""
    record = bundle.record(name)
    if len(record.shape) != 2:
        raise ParseError(
            f"tensor {name!r} has rank {len(record.shape)}, expected a rank-2 embedding matrix"
        )
    matrix = decode_tensor(record, bundle.tensor_bytes(name))
    if not np.isfinite(matrix).all():
        raise NumericsError(f"tensor {name!r} contains non-finite values")
    return matrix


def write_checkpoint(
    records,
    path: str | Path,
    metadata: dict[str, str] | None = None,
) -> None:
    """Write (name, dtype, shape, values) records to ``path``.

    ``values`` may be a numpy array (converted to ``dtype``) or a
    bytes-like object already in on-disk representation, which is
    written verbatim.  The payload is tiled contiguously in the given
    record order and the output bytes are a pure function of the input.
    """
    path = Path(path)
    header: dict[str, object] = {}
    if metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in sorted(metadata.items())}

    entries: list[tuple[str, str, tuple[int, ...], object]] = []
    offset = 0
    for name, dtype, shape, values in records:
        if dtype not in DTYPE_WIDTHS:
            raise ValueError(f"unsupported dtype {dtype!r} for tensor {name!r}")
        if name in header:
            raise ValueError(f"duplicate tensor name {name!r}")
        shape = tuple(int(extent) for extent in shape)
        element_count = 1
        for extent in shape:
            if extent < 0:
                raise ValueError(f"negative extent in shape for tensor {name!r}")
            element_count *= extent
        byte_count = element_count * DTYPE_WIDTHS[dtype]
        if isinstance(values, np.ndarray):
            if values.size != element_count:
                raise ValueError(
                    f"tensor {name!r}: {values.size} values do not fill shape {shape}"
                )
        else:
            values = memoryview(values)
            if values.nbytes != byte_count:
                raise ValueError(
                    f"tensor {name!r}: {values.nbytes} payload bytes, expected {byte_count}"
                )
        header[name] = {
            "dtype": dtype,
            "shape": list(shape),
            "data_offsets": [offset, offset + byte_count],
        }
        entries.append((name, dtype, shape, values))
        offset += byte_count

    header_raw = json.dumps(header, separators=(",", ":"), ensure_ascii=True).encode("utf-8")
    if len(header_raw) % 8:
        header_raw += b" " * (8 - len(header_raw) % 8)

    with open(path, "wb") as handle:
        handle.write(struct.pack("<Q", len(header_raw)))
        handle.write(header_raw)
        for name, dtype, shape, values in entries:
            if isinstance(values, np.ndarray):
                encoded = encode_tensor(values.reshape(-1), dtype)
                handle.write(encoded.data)
            else:
                handle.write(values)


def find_embedding_tensor(
    bundle: CheckpointBundle, hint: str | None = None
) -> tuple[str, str | None, bool]:
    """Locate the input-embedding tensor and any separate output head.

    Candidates are rank-2 tensors whose names contain one of the
    documented hint substrings.  ``hint`` overrides detection for the
    input embedding: an exact tensor name, or a substring narrowing the
    rank-2 tensors to one.  Returns (input_name, head_name, tied); tied
    is True when no separate head exists.
    """
    rank2 = [record.name for record in bundle.records if len(record.shape) == 2]
    head_candidates = [
        name for name in rank2 if any(h in name for h in OUTPUT_HEAD_NAME_HINTS)
    ]

    if hint is not None:
        if hint in bundle._by_name:
            if len(bundle.record(hint).shape) != 2:
                raise ParseError(f"hinted tensor {hint!r} is not rank-2")
            input_name = hint
        else:
            matches = [name for name in rank2 if hint in name]
            if not matches:
                raise ParseError(f"no rank-2 tensor matches hint {hint!r}")
            if len(matches) > 1:
                raise ParseError(f"hint {hint!r} is ambiguous: {matches}")
            input_name = matches[0]
    else:
        input_candidates = [
            name
            for name in rank2
            if any(h in name for h in INPUT_EMBEDDING_NAME_HINTS)
            and name not in head_candidates
        ]
        if not input_candidates:
            raise ParseError(
                "no input-embedding tensor found; pass an explicit tensor name "
                f"(rank-2 tensors: {rank2})"
            )
        if len(input_candidates) > 1:
            raise ParseError(
                f"ambiguous input-embedding candidates {input_candidates}; pass an explicit name"
            )
        input_name = input_candidates[0]

    head_candidates = [name for name in head_candidates if name != input_name]
    if len(head_candidates) > 1:
        raise ParseError(f"ambiguous output-head candidates {head_candidates}")
    head_name = head_candidates[0] if head_candidates else None
    return input_name, head_name, head_name is None
