"""Reader and writer for the single-file tensor checkpoint format.

The format: an 8-byte little-endian length, a JSON header mapping each
tensor name to {dtype, shape, data_offsets} plus an optional
"__metadata__" object, then one contiguous payload. This module speaks
only float32 because the toy models train in float32; the grafting tool
accepts and produces the same layout.

Implemented here independently so the harness exercises the format
contract rather than the grafting tool's own code.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

HEADER_ALIGN = 8


def write_tensors(path, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> Path:
    """Write named float32 arrays in dict order. Deterministic bytes."""
    path = Path(path)
    header: dict = {}
    if metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in sorted(metadata.items())}
    payload = bytearray()
    for name, values in tensors.items():
        array = np.ascontiguousarray(values, dtype="<f4")
        start = len(payload)
        payload += array.tobytes()
        header[name] = {
            "dtype": "F32",
            "shape": list(array.shape),
            "data_offsets": [start, len(payload)],
        }
    encoded = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    if len(encoded) % HEADER_ALIGN:
        encoded += b" " * (HEADER_ALIGN - len(encoded) % HEADER_ALIGN)
    path.write_bytes(struct.pack("<Q", len(encoded)) + encoded + bytes(payload))
    return path


def read_tensors(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read every tensor as float32. Returns (tensors, metadata)."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: too short for a header length")
    (header_len,) = struct.unpack_from("<Q", raw)
    if 8 + header_len > len(raw):
        raise ValueError(f"{path}: header length {header_len} beyond end of file")
    header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    metadata = header.pop("__metadata__", {})
    payload = memoryview(raw)[8 + header_len :]

    tensors: dict[str, np.ndarray] = {}
    for name, record in header.items():
        if record["dtype"] != "F32":
            raise ValueError(f"{path}: tensor {name!r} is {record['dtype']}, expected F32")
        start, end = record["data_offsets"]
        if not (0 <= start <= end <= len(payload)):
            raise ValueError(f"{path}: tensor {name!r} offsets out of range")
        array = np.frombuffer(payload[start:end], dtype="<f4")
        tensors[name] = array.reshape(record["shape"]).copy()
    return tensors, metadata
