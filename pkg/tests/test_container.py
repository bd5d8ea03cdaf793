from __future__ import annotations

import struct

import numpy as np
import pytest

from src.errors import (
    BadMagicError,
    ChecksumMismatchError,
    ContainerError,
    DuplicateNameError,
    TruncatedPayloadError,
    UnsupportedDTypeError,
    UnsupportedVersionError,
)
from src.services.container import (
    MAGIC,
    container_read,
    container_scan,
    container_write,
    decode_container,
    encode_container,
    header_size,
    record_overhead,
)


def test_empty_container_is_header_only(tmp_path):
    path = tmp_path / "empty.ca3d"
    container_write(path, {})
    data = path.read_bytes()
    assert len(data) == 12
    assert data[:4] == MAGIC
    assert container_read(path) == {}


def test_known_tensor_file_length(tmp_path):
    path = tmp_path / "one.ca3d"
    array = np.arange(6, dtype=np.float32).reshape(2, 3)
    container_write(path, {"x": array})
    assert path.stat().st_size == header_size() + record_overhead("x", 2) + 24


def test_layout_is_little_endian():
    data = encode_container([("ab", np.array([1.0], dtype=np.float32))])
    assert struct.unpack_from("<I", data, 4)[0] == 1
    assert struct.unpack_from("<I", data, 8)[0] == 1
    assert struct.unpack_from("<I", data, 12)[0] == 2
    assert data[16:18] == b"ab"
    assert data[-4:] == np.array([1.0], dtype="<f4").tobytes()


def test_round_trip_is_bitwise(tmp_path, rng):
    records = {}
    for index in range(25):
        rank = int(rng.integers(0, 4))
        shape = tuple(int(s) for s in rng.integers(1, 5, size=rank))
        records[f"t{index}"] = rng.standard_normal(shape).astype(np.float32)
    records["bytes"] = np.frombuffer(b"hello", dtype=np.uint8)
    path = tmp_path / "many.ca3d"
    container_write(path, records)
    loaded = container_read(path)
    assert list(loaded) == list(records)
    for name, array in records.items():
        assert loaded[name].dtype == array.dtype
        assert loaded[name].shape == array.shape
        assert loaded[name].tobytes() == array.tobytes()


@pytest.mark.parametrize("trial", range(100))
def test_random_shape_round_trip(trial):
    rng = np.random.default_rng(trial)
    rank = int(rng.integers(0, 5))
    shape = tuple(int(s) for s in rng.integers(0, 6, size=rank))
    if rng.random() < 0.5:
        array = rng.standard_normal(shape).astype(np.float32)
    else:
        array = rng.integers(0, 256, size=shape).astype(np.uint8)
    (record,) = decode_container(encode_container({f"fuzz_{trial}": array}))
    assert record.array.dtype == array.dtype
    assert record.array.shape == array.shape
    assert record.array.tobytes() == array.tobytes()


def test_special_values_survive():
    array = np.array([np.nan, np.inf, -0.0, 1e-45], dtype=np.float32)
    (record,) = decode_container(encode_container({"special": array}))
    assert record.array.tobytes() == array.tobytes()


def test_duplicate_names_rejected():
    with pytest.raises(DuplicateNameError):
        encode_container([("a", np.zeros(1, np.float32)), ("a", np.ones(1, np.float32))])


def test_unsupported_dtype_rejected():
    with pytest.raises(UnsupportedDTypeError):
        encode_container({"x": np.zeros(2, dtype=np.int64)})


def test_bad_magic():
    data = bytearray(encode_container({}))
    data[:4] = b"NOPE"
    with pytest.raises(BadMagicError):
        decode_container(bytes(data))


def test_future_version_rejected():
    data = bytearray(encode_container({}))
    data[4:8] = struct.pack("<I", 2)
    with pytest.raises(UnsupportedVersionError, match="version 2"):
        decode_container(bytes(data))


def test_truncated_payload():
    data = encode_container({"x": np.zeros((4, 4), dtype=np.float32)})
    with pytest.raises(TruncatedPayloadError):
        decode_container(data[:-3])


def test_trailing_bytes():
    with pytest.raises(ContainerError):
        decode_container(encode_container({}) + b"\x00")


def test_corrupted_payload_flagged(tmp_path):
    path = tmp_path / "bad.ca3d"
    container_write(path, {"a": np.ones(4, np.float32), "b": np.zeros(4, np.float32)})
    data = bytearray(path.read_bytes())
    data[-1] ^= 0xFF
    path.write_bytes(bytes(data))

    records = container_scan(path)
    assert [r.crc_ok for r in records] == [True, False]
    with pytest.raises(ChecksumMismatchError) as excinfo:
        container_read(path)
    assert excinfo.value.names == ["b"]
    assert set(container_read(path, strict=False)) == {"a", "b"}


def test_atomic_write_leaves_no_temporaries(tmp_path):
    container_write(tmp_path / "x.ca3d", {"x": np.ones(3, np.float32)})
    assert [p.name for p in tmp_path.iterdir()] == ["x.ca3d"]
