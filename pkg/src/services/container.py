"""Formato binário de tensores ``CA3D``.

Layout (little-endian)::

    "CA3D" | u32 versão | u32 número de registros
    por registro:
        u32 len(nome) | nome UTF-8 | u32 rank | u64 dims[rank]
        | u32 dtype (0 = float32, 1 = uint8) | u32 CRC32 do payload | payload

Arquivos são gravados num temporário ao lado do destino e renomeados, então
leitores nunca observam um arquivo parcial.
"""

from __future__ import annotations

import logging
import os
import struct
import tempfile
import zlib
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np

from ..errors import (
    BadMagicError,
    ChecksumMismatchError,
    ContainerError,
    DuplicateNameError,
    TruncatedPayloadError,
    UnsupportedDTypeError,
    UnsupportedVersionError,
)

logger = logging.getLogger(__name__)

MAGIC = b"CA3D"
FORMAT_VERSION = 1

_header = struct.Struct("<4sII")
_u32 = struct.Struct("<I")
_u64 = struct.Struct("<Q")
_dtype_crc = struct.Struct("<II")

DTYPE_CODES: Dict[int, np.dtype] = {
    0: np.dtype("<f4"),
    1: np.dtype("u1"),
}


def _dtype_code(dtype: np.dtype) -> Optional[int]:
    if dtype.kind == "f" and dtype.itemsize == 4:
        return 0
    if dtype == np.uint8:
        return 1
    return None


Records = Union[Mapping[str, np.ndarray], Iterable[Tuple[str, np.ndarray]]]


class ContainerRecord(NamedTuple):
    name: str
    array: np.ndarray
    crc_ok: bool


def header_size() -> int:
    return _header.size


def record_overhead(name: str, rank: int) -> int:
    return _u32.size + len(name.encode("utf-8")) + _u32.size + rank * _u64.size + _dtype_crc.size


def _items(records: Records) -> List[Tuple[str, np.ndarray]]:
    items = list(records.items()) if isinstance(records, Mapping) else list(records)
    seen = set()
    for name, _ in items:
        if name in seen:
            raise DuplicateNameError(f"duplicate record name {name!r}")
        seen.add(name)
    return items


def encode_container(records: Records) -> bytes:
    items = _items(records)
    chunks = [_header.pack(MAGIC, FORMAT_VERSION, len(items))]
    for name, array in items:
        array = np.asarray(array)
        code = _dtype_code(array.dtype)
        if code is None:
            raise UnsupportedDTypeError(f"record {name!r}: dtype {array.dtype} is not float32 or uint8")
        payload = np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes()
        encoded_name = name.encode("utf-8")
        chunks.append(_u32.pack(len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(_u32.pack(array.ndim))
        chunks.extend(_u64.pack(dim) for dim in array.shape)
        chunks.append(_dtype_crc.pack(code, zlib.crc32(payload) & 0xFFFFFFFF))
        chunks.append(payload)
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = memoryview(data)
        self.offset = 0

    def take(self, size: int, what: str) -> memoryview:
        end = self.offset + size
        if end > len(self.data):
            raise TruncatedPayloadError(
                f"truncated {what}: need {size} bytes at offset {self.offset}, file has {len(self.data)}"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> tuple:
        return fmt.unpack(self.take(fmt.size, what))


def decode_container(data: bytes) -> List[ContainerRecord]:
    """Lê todos os registros sem rejeitar CRC divergente (ver ``crc_ok``)."""
    reader = _Reader(data)
    if bytes(data[:4]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}")
    _, version, count = reader.unpack(_header, "header")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"container version {version} is not supported (expected {FORMAT_VERSION})")

    records: List[ContainerRecord] = []
    seen = set()
    for _ in range(count):
        (name_len,) = reader.unpack(_u32, "record name length")
        name = bytes(reader.take(name_len, "record name")).decode("utf-8")
        if name in seen:
            raise DuplicateNameError(f"duplicate record name {name!r}")
        seen.add(name)
        (rank,) = reader.unpack(_u32, f"rank of {name!r}")
        dims = tuple(reader.unpack(_u64, f"dims of {name!r}")[0] for _ in range(rank))
        code, crc = reader.unpack(_dtype_crc, f"dtype of {name!r}")
        if code not in DTYPE_CODES:
            raise UnsupportedDTypeError(f"record {name!r}: unknown dtype code {code}")
        dtype = DTYPE_CODES[code]
        size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        payload = bytes(reader.take(size, f"payload of {name!r}"))
        array = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
        records.append(ContainerRecord(name, array, (zlib.crc32(payload) & 0xFFFFFFFF) == crc))
    if reader.offset != len(data):
        raise ContainerError(f"{len(data) - reader.offset} trailing bytes after last record")
    return records


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def container_write(path: Union[str, Path], records: Records) -> None:
    data = encode_container(records)
    atomic_write_bytes(path, data)
    logger.debug("📦 Wrote %s (%d bytes)", path, len(data))


def container_scan(path: Union[str, Path]) -> List[ContainerRecord]:
    return decode_container(Path(path).read_bytes())


def container_read(path: Union[str, Path], strict: bool = True) -> Dict[str, np.ndarray]:
    records = container_scan(path)
    corrupted = [record.name for record in records if not record.crc_ok]
    if corrupted:
        if strict:
            raise ChecksumMismatchError(corrupted)
        logger.warning("⚠️ CRC32 mismatch in %s: %s", path, ", ".join(corrupted))
    return {record.name: record.array for record in records}
