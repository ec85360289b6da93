"""Reader/writer for the named-tensor container the evaluation toolkit uses.

The file is a safetensors-style container:

    bytes 0..8   u64 little-endian header length N
    bytes 8..8+N UTF-8 JSON: tensor name -> {"dtype", "shape", "data_offsets"},
                 plus an optional "__metadata__" string map
    rest         raw tensor data, offsets relative to this section

Writes are canonical so equal inputs give equal bytes: tensor data is laid
out in lexicographic name order and the JSON header uses sorted keys with
compact separators.  Supported dtypes are F16, F32, F64, and I64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

_CODE_TO_DTYPE = {
    "F16": np.dtype("<f2"),
    "F32": np.dtype("<f4"),
    "F64": np.dtype("<f8"),
    "I64": np.dtype("<i8"),
}
_DTYPE_TO_CODE = {dtype: code for code, dtype in _CODE_TO_DTYPE.items()}


def write_container(tensors: dict[str, np.ndarray], path: str | Path,
                    metadata: dict[str, str] | None = None) -> Path:
    """Serialize ``tensors`` (name -> array) to ``path``; returns the path."""
    header: dict[str, object] = {}
    if metadata:
        for key, value in metadata.items():
            if not isinstance(key, str) or not isinstance(value, str):
                raise FormatError("container metadata must map strings to strings")
        header["__metadata__"] = dict(sorted(metadata.items()))

    chunks: list[bytes] = []
    cursor = 0
    for name in sorted(tensors):
        if not name or not isinstance(name, str):
            raise FormatError(f"bad tensor name {name!r}")
        if "\x00" in name:
            raise FormatError(f"tensor name {name!r} contains a NUL byte")
        array = np.asarray(tensors[name], order="C")
        if array.dtype.byteorder == ">":
            array = array.astype(array.dtype.newbyteorder("<"))
        code = _DTYPE_TO_CODE.get(np.dtype(array.dtype.newbyteorder("=")))
        if code is None:
            raise FormatError(
                f"tensor {name!r} has dtype {array.dtype}, which the container "
                f"cannot hold (use f16/f32/f64/i64)")
        raw = array.tobytes()
        header[name] = {"dtype": code, "shape": list(array.shape),
                        "data_offsets": [cursor, cursor + len(raw)]}
        chunks.append(raw)
        cursor += len(raw)

    encoded = json.dumps(header, sort_keys=True, separators=(",", ":"),
                         ensure_ascii=False).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(encoded)))
        fh.write(encoded)
        for raw in chunks:
            fh.write(raw)
    return path


def _no_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise FormatError(f"duplicate tensor name {key!r} in header")
        out[key] = value
    return out


def read_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Parse a container file into (tensors, metadata); data is copied out."""
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise FormatError(f"{path}: too short for the 8-byte length prefix")
    (header_len,) = struct.unpack_from("<Q", blob)
    if header_len > len(blob) - 8:
        raise FormatError(f"{path}: header length {header_len} runs past end of file")
    try:
        header = json.loads(blob[8:8 + header_len].decode("utf-8"),
                            object_pairs_hook=_no_duplicates)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unparsable header: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header is not a JSON object")

    metadata = header.pop("__metadata__", {})
    if not isinstance(metadata, dict) or any(
            not isinstance(k, str) or not isinstance(v, str)
            for k, v in metadata.items()):
        raise FormatError(f"{path}: __metadata__ must map strings to strings")

    data = memoryview(blob)[8 + header_len:]
    spans = []
    for name, entry in header.items():
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: entry {name!r} is not an object")
        dtype = _CODE_TO_DTYPE.get(entry.get("dtype"))
        if dtype is None:
            raise FormatError(
                f"{path}: tensor {name!r} has unknown dtype {entry.get('dtype')!r}")
        shape = entry.get("shape")
        if not isinstance(shape, list) or any(
                not isinstance(d, int) or isinstance(d, bool) or d < 0 for d in shape):
            raise FormatError(f"{path}: tensor {name!r} has bad shape {shape!r}")
        offsets = entry.get("data_offsets")
        if (not isinstance(offsets, list) or len(offsets) != 2
                or any(not isinstance(o, int) or isinstance(o, bool) or o < 0
                       for o in offsets) or offsets[0] > offsets[1]):
            raise FormatError(f"{path}: tensor {name!r} has bad data_offsets {offsets!r}")
        begin, end = offsets
        if end > len(data):
            raise FormatError(
                f"{path}: tensor {name!r} needs data bytes up to {end}, "
                f"file has {len(data)}")
        count = 1
        for dim in shape:
            count *= dim
        if end - begin != count * dtype.itemsize:
            raise FormatError(
                f"{path}: tensor {name!r} spans {end - begin} bytes but shape "
                f"{shape} needs {count * dtype.itemsize}")
        spans.append((begin, end, name, dtype, shape))

    spans.sort()
    cursor = 0
    for begin, end, name, _, _ in spans:
        if begin != cursor:
            word = "overlaps" if begin < cursor else "leaves a gap before"
            raise FormatError(f"{path}: tensor {name!r} {word} the previous tensor")
        cursor = end
    if cursor != len(data):
        raise FormatError(f"{path}: {len(data) - cursor} unclaimed trailing bytes")

    tensors = {}
    for begin, end, name, dtype, shape in spans:
        tensors[name] = np.frombuffer(
            data, dtype=dtype, count=(end - begin) // dtype.itemsize,
            offset=begin).reshape(shape).copy()
    return dict(sorted(tensors.items())), dict(metadata)
