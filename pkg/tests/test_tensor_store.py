"""Container format: round trips, deterministic bytes, malformed-file errors."""

from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from helpers import random_checkpoint
from robust_od.errors import InputError, IntegrityError, ValidationError
from robust_od.tensor_store import (Checkpoint, KeyDiff, diff_keys,
                                    load_checkpoint, save_checkpoint)


def _roundtrip(tmp_path, ckpt, **load_kwargs):
    path = tmp_path / "ckpt.safetensors"
    save_checkpoint(ckpt, path)
    return load_checkpoint(path, **load_kwargs)


class TestRoundTrip:
    def test_random_checkpoints_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(25):
            ckpt = random_checkpoint(rng)
            ckpt.metadata = {"run": str(i), "stage": "ft"}
            loaded = _roundtrip(tmp_path, ckpt)
            assert set(loaded.tensors) == set(ckpt.tensors)
            for name, arr in ckpt.tensors.items():
                got = loaded.tensors[name]
                assert got.dtype == arr.dtype and got.shape == arr.shape
                assert got.tobytes() == arr.tobytes()
            assert loaded.metadata == ckpt.metadata

    def test_empty_container(self, tmp_path):
        loaded = _roundtrip(tmp_path, Checkpoint())
        assert loaded.tensors == {} and loaded.metadata == {}

    def test_scalar_and_zero_size_tensors(self, tmp_path):
        ckpt = Checkpoint(tensors={
            "scalar": np.array(3.5, dtype=np.float32),
            "empty": np.zeros((0, 4), dtype=np.float32),
            "counter": np.array(123, dtype=np.int64),
        })
        loaded = _roundtrip(tmp_path, ckpt)
        assert loaded.tensors["scalar"].shape == ()
        assert float(loaded.tensors["scalar"]) == 3.5
        assert loaded.tensors["empty"].shape == (0, 4)
        assert loaded.tensors["counter"].dtype == np.int64
        assert int(loaded.tensors["counter"]) == 123

    def test_iteration_order_lexicographic(self, tmp_path):
        ckpt = Checkpoint(tensors={"b": np.zeros(1, np.float32),
                                   "a": np.zeros(1, np.float32),
                                   "a.b": np.zeros(1, np.float32)})
        loaded = _roundtrip(tmp_path, ckpt)
        assert list(loaded.tensors) == sorted(loaded.tensors)


class TestDeterminism:
    def test_equal_checkpoints_identical_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        ckpt = random_checkpoint(rng)
        ckpt.metadata = {"b": "2", "a": "1"}
        save_checkpoint(ckpt, tmp_path / "one.st")
        # same content, different dict insertion order
        shuffled = Checkpoint(
            tensors={k: ckpt.tensors[k] for k in reversed(list(ckpt.tensors))},
            metadata={"a": "1", "b": "2"})
        save_checkpoint(shuffled, tmp_path / "two.st")
        assert (tmp_path / "one.st").read_bytes() == (tmp_path / "two.st").read_bytes()


class TestDtypePolicy:
    def test_f16_f64_cast_to_f32_by_default(self, tmp_path):
        ckpt = Checkpoint(tensors={"half": np.arange(4, dtype=np.float16),
                                   "double": np.arange(4, dtype=np.float64)})
        loaded = _roundtrip(tmp_path, ckpt)
        assert loaded.tensors["half"].dtype == np.float32
        assert loaded.tensors["double"].dtype == np.float32

    def test_cast_disabled_preserves_dtypes(self, tmp_path):
        ckpt = Checkpoint(tensors={"half": np.arange(4, dtype=np.float16),
                                   "double": np.arange(4, dtype=np.float64)})
        loaded = _roundtrip(tmp_path, ckpt, cast_to_f32=False)
        assert loaded.tensors["half"].dtype == np.float16
        assert loaded.tensors["double"].dtype == np.float64

    def test_unsupported_dtype_rejected(self, tmp_path):
        ckpt = Checkpoint(tensors={"bad": np.zeros(3, dtype=np.int32)})
        with pytest.raises(ValidationError, match="unsupported dtype"):
            save_checkpoint(ckpt, tmp_path / "x.st")


def _write_container(path, header: dict, data: bytes):
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    path.write_bytes(struct.pack("<Q", len(blob)) + blob + data)


class TestMalformedFiles:
    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(InputError):
            load_checkpoint(tmp_path / "nope.st")

    def test_unwritable_destination_is_io_error(self, tmp_path):
        ckpt = Checkpoint(tensors={"a": np.zeros(1, np.float32)})
        with pytest.raises(InputError):
            save_checkpoint(ckpt, tmp_path / "no" / "such" / "dir" / "x.st")

    def test_truncated_data_section(self, tmp_path):
        # header declares a [2,2] f32 tensor (16 bytes) but only 12 follow
        path = tmp_path / "trunc.st"
        _write_container(path, {"w": {"dtype": "F32", "shape": [2, 2],
                                      "data_offsets": [0, 16]}}, b"\x00" * 12)
        with pytest.raises(IntegrityError, match="truncated"):
            load_checkpoint(path)

    def test_shape_bytes_mismatch(self, tmp_path):
        path = tmp_path / "short.st"
        _write_container(path, {"w": {"dtype": "F32", "shape": [2, 2],
                                      "data_offsets": [0, 12]}}, b"\x00" * 12)
        with pytest.raises(IntegrityError, match="12 bytes"):
            load_checkpoint(path)

    def test_duplicate_tensor_name(self, tmp_path):
        path = tmp_path / "dup.st"
        entry = '{"dtype":"F32","shape":[1],"data_offsets":[0,4]}'
        blob = f'{{"w":{entry},"w":{entry}}}'.encode()
        path.write_bytes(struct.pack("<Q", len(blob)) + blob + b"\x00" * 4)
        with pytest.raises(IntegrityError, match="duplicate"):
            load_checkpoint(path)

    def test_malformed_json_reports_byte_offset(self, tmp_path):
        path = tmp_path / "bad.st"
        blob = b'{"w": not json}'
        path.write_bytes(struct.pack("<Q", len(blob)) + blob)
        with pytest.raises(IntegrityError, match="byte offset"):
            load_checkpoint(path)

    def test_header_longer_than_file(self, tmp_path):
        path = tmp_path / "hdr.st"
        path.write_bytes(struct.pack("<Q", 1000) + b"{}")
        with pytest.raises(IntegrityError, match="header length"):
            load_checkpoint(path)

    def test_overlapping_offsets(self, tmp_path):
        path = tmp_path / "overlap.st"
        _write_container(path, {
            "a": {"dtype": "F32", "shape": [1], "data_offsets": [0, 4]},
            "b": {"dtype": "F32", "shape": [1], "data_offsets": [2, 6]},
        }, b"\x00" * 6)
        with pytest.raises(IntegrityError, match="overlapping"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "trail.st"
        _write_container(path, {"a": {"dtype": "F32", "shape": [1],
                                      "data_offsets": [0, 4]}}, b"\x00" * 9)
        with pytest.raises(IntegrityError, match="trailing"):
            load_checkpoint(path)

    def test_unknown_dtype_code(self, tmp_path):
        path = tmp_path / "dtype.st"
        _write_container(path, {"a": {"dtype": "Q8", "shape": [1],
                                      "data_offsets": [0, 1]}}, b"\x00")
        with pytest.raises(IntegrityError, match="unknown dtype"):
            load_checkpoint(path)

    def test_nul_in_name_rejected_on_save(self, tmp_path):
        ckpt = Checkpoint(tensors={"a\x00b": np.zeros(1, np.float32)})
        with pytest.raises(ValidationError, match="NUL"):
            save_checkpoint(ckpt, tmp_path / "x.st")


class TestDiffKeys:
    def test_identical_checkpoints_clean(self):
        ckpt = Checkpoint(tensors={"a": np.zeros((2, 3), np.float32)})
        diff = diff_keys(ckpt, ckpt)
        assert diff.clean()

    def test_one_sided_key(self):
        left = Checkpoint(tensors={"head.cls": np.zeros(2, np.float32),
                                   "shared": np.zeros(2, np.float32)})
        right = Checkpoint(tensors={"shared": np.zeros(2, np.float32)})
        diff = diff_keys(left, right)
        assert diff.only_left == {"head.cls"}
        assert diff.only_right == frozenset()
        assert diff.shape_mismatched == frozenset()

    def test_shape_mismatch(self):
        left = Checkpoint(tensors={"head": np.zeros((91, 256), np.float32)})
        right = Checkpoint(tensors={"head": np.zeros((2, 256), np.float32)})
        assert diff_keys(left, right).shape_mismatched == {"head"}

    def test_dtype_mismatch_counts_as_shape_mismatch(self):
        left = Checkpoint(tensors={"t": np.zeros(4, np.float32)})
        right = Checkpoint(tensors={"t": np.zeros(4, np.int64)})
        assert diff_keys(left, right).shape_mismatched == {"t"}

    def test_symmetry_under_swap(self):
        rng = np.random.default_rng(3)
        left = random_checkpoint(rng, names=["a", "b", "c"])
        right = random_checkpoint(rng, names=["b", "c", "d"])
        fwd, rev = diff_keys(left, right), diff_keys(right, left)
        assert fwd.only_left == rev.only_right
        assert fwd.only_right == rev.only_left
        assert fwd.shape_mismatched == rev.shape_mismatched

    def test_sets_are_disjoint(self):
        left = Checkpoint(tensors={"a": np.zeros(1, np.float32),
                                   "b": np.zeros((2,), np.float32)})
        right = Checkpoint(tensors={"b": np.zeros((3,), np.float32),
                                    "c": np.zeros(1, np.float32)})
        diff = diff_keys(left, right)
        assert isinstance(diff, KeyDiff)
        assert not (diff.only_left & diff.only_right)
        assert not (diff.only_left & diff.shape_mismatched)
        assert not (diff.only_right & diff.shape_mismatched)
