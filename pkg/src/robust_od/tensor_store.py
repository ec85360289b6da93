"""Named-tensor checkpoint container.

File layout (compatible with the common "safetensors" container):

    [8 bytes]  u64 little-endian: header byte length N
    [N bytes]  UTF-8 JSON: {"tensor.name": {"dtype": "F32", "shape": [..],
               "data_offsets": [begin, end]}, ..., "__metadata__": {...}}
    [rest]     contiguous tensor data; offsets are relative to this section

Serialization is deterministic: tensors are laid out in lexicographic name
order, the JSON header uses sorted keys and compact separators, and metadata
is string->string only.  Two saves of equal checkpoints are byte-identical.

f16 and f64 tensors are accepted but cast to f32 on load unless
``cast_to_f32=False``; i64 tensors (batch-norm step counters and similar)
pass through unchanged.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, IntegrityError, ValidationError

_DTYPES: dict[str, np.dtype] = {
    "F16": np.dtype("<f2"),
    "F32": np.dtype("<f4"),
    "F64": np.dtype("<f8"),
    "I64": np.dtype("<i8"),
}
_CODES = {np.dtype(np.float16): "F16", np.dtype(np.float32): "F32",
          np.dtype(np.float64): "F64", np.dtype(np.int64): "I64"}


@dataclass
class Checkpoint:
    """In-memory checkpoint: name -> tensor, plus provenance metadata."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class KeyDiff:
    """Key-level comparison of two checkpoints; the three sets are disjoint."""

    only_left: frozenset[str]
    only_right: frozenset[str]
    shape_mismatched: frozenset[str]

    def clean(self) -> bool:
        return not (self.only_left or self.only_right or self.shape_mismatched)


def _validate_checkpoint(ckpt: Checkpoint) -> None:
    if not isinstance(ckpt.tensors, dict):
        raise ValidationError("checkpoint tensors must be a dict of name -> array")
    for name, arr in ckpt.tensors.items():
        if not isinstance(name, str) or not name:
            raise ValidationError(f"tensor name must be a non-empty string, got {name!r}")
        if "\x00" in name:
            raise ValidationError(f"tensor name {name!r} contains a NUL byte")
        if not isinstance(arr, np.ndarray):
            raise ValidationError(f"tensor {name!r} is not a numpy array")
        if arr.dtype not in _CODES:
            raise ValidationError(
                f"tensor {name!r} has unsupported dtype {arr.dtype}; "
                f"supported: f16, f32, f64, i64")
    for key, value in ckpt.metadata.items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise ValidationError("checkpoint metadata must map strings to strings")


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write ``ckpt`` to ``path``; equal checkpoints produce identical bytes."""
    _validate_checkpoint(ckpt)
    names = sorted(ckpt.tensors)
    header: dict[str, object] = {}
    if ckpt.metadata:
        header["__metadata__"] = {k: ckpt.metadata[k] for k in sorted(ckpt.metadata)}
    buffers: list[bytes] = []
    offset = 0
    for name in names:
        # asarray(order="C") rather than ascontiguousarray: the latter
        # promotes 0-d arrays to shape (1,), which would change the header
        arr = np.asarray(ckpt.tensors[name], order="C")
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        raw = arr.tobytes()
        header[name] = {
            "dtype": _CODES[np.dtype(arr.dtype.newbyteorder("="))],
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        buffers.append(raw)
        offset += len(raw)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"),
                              ensure_ascii=False).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", len(header_bytes)))
            fh.write(header_bytes)
            for raw in buffers:
                fh.write(raw)
    except OSError as exc:
        raise InputError(f"cannot write checkpoint {path}: {exc}") from exc


def _reject_duplicates(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise IntegrityError(f"duplicate tensor name {key!r} in container header")
        seen[key] = value
    return seen


def load_checkpoint(path: str | Path, cast_to_f32: bool = True) -> Checkpoint:
    """Read a container file; tensor data is bit-exact with the file contents."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 8:
        raise IntegrityError(f"{path}: container shorter than the 8-byte length prefix")
    (header_len,) = struct.unpack_from("<Q", blob)
    if 8 + header_len > len(blob):
        raise IntegrityError(
            f"{path}: header length {header_len} exceeds file size at byte offset 8")
    try:
        header = json.loads(blob[8:8 + header_len].decode("utf-8"),
                            object_pairs_hook=_reject_duplicates)
    except UnicodeDecodeError as exc:
        raise IntegrityError(f"{path}: header is not UTF-8 at byte offset {8 + exc.start}") from exc
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path}: malformed JSON header at byte offset {8 + exc.pos}") from exc
    if not isinstance(header, dict):
        raise IntegrityError(f"{path}: header must be a JSON object")

    metadata = header.pop("__metadata__", {})
    if not isinstance(metadata, dict) or \
            any(not isinstance(k, str) or not isinstance(v, str) for k, v in metadata.items()):
        raise IntegrityError(f"{path}: __metadata__ must map strings to strings")

    data = blob[8 + header_len:]
    entries = []
    for name, desc in header.items():
        if not name:
            raise IntegrityError(f"{path}: empty tensor name in header")
        if not isinstance(desc, dict):
            raise IntegrityError(f"{path}: entry for {name!r} is not an object")
        dtype_code = desc.get("dtype")
        if dtype_code not in _DTYPES:
            raise IntegrityError(f"{path}: tensor {name!r} has unknown dtype {dtype_code!r}")
        shape = desc.get("shape")
        if not isinstance(shape, list) or \
                any(not isinstance(d, int) or isinstance(d, bool) or d < 0 for d in shape):
            raise IntegrityError(f"{path}: tensor {name!r} has invalid shape {shape!r}")
        offsets = desc.get("data_offsets")
        if not isinstance(offsets, list) or len(offsets) != 2 or \
                any(not isinstance(o, int) or isinstance(o, bool) or o < 0 for o in offsets):
            raise IntegrityError(f"{path}: tensor {name!r} has invalid data_offsets {offsets!r}")
        begin, end = offsets
        if begin > end:
            raise IntegrityError(f"{path}: tensor {name!r} has reversed data_offsets")
        if end > len(data):
            raise IntegrityError(
                f"{path}: data section truncated: tensor {name!r} needs bytes up to "
                f"{end}, file provides {len(data)}")
        dtype = _DTYPES[dtype_code]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        expected = count * dtype.itemsize
        if end - begin != expected:
            raise IntegrityError(
                f"{path}: tensor {name!r} declares shape {shape} ({expected} bytes) "
                f"but data_offsets span {end - begin} bytes")
        entries.append((name, dtype, shape, begin, end))

    # the data section must be exactly the concatenation of the tensors
    entries.sort(key=lambda e: e[3])
    cursor = 0
    for name, _, _, begin, end in entries:
        if begin != cursor:
            kind = "overlapping" if begin < cursor else "gapped"
            raise IntegrityError(f"{path}: {kind} data_offsets at tensor {name!r}")
        cursor = end
    if cursor != len(data):
        raise IntegrityError(
            f"{path}: {len(data) - cursor} trailing bytes after the last tensor")

    tensors: dict[str, np.ndarray] = {}
    for name, dtype, shape, begin, end in sorted(entries):
        arr = np.frombuffer(data, dtype=dtype, count=(end - begin) // dtype.itemsize,
                            offset=begin).reshape(shape).copy()
        if cast_to_f32 and arr.dtype in (np.float16, np.float64):
            arr = arr.astype(np.float32)
        tensors[name] = arr
    return Checkpoint(tensors=tensors, metadata=dict(metadata))


def diff_keys(left: Checkpoint, right: Checkpoint) -> KeyDiff:
    """Classify keys by presence and shape/dtype equality; exhaustive and disjoint."""
    lkeys, rkeys = set(left.tensors), set(right.tensors)
    mismatched = {
        name for name in lkeys & rkeys
        if left.tensors[name].shape != right.tensors[name].shape
        or left.tensors[name].dtype != right.tensors[name].dtype
    }
    return KeyDiff(only_left=frozenset(lkeys - rkeys),
                   only_right=frozenset(rkeys - lkeys),
                   shape_mismatched=frozenset(mismatched))
