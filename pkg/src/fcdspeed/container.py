"""Binary tensor container used for movies, aggregated movies and clusters.

Layout::

    64 bytes   fixed preamble: magic, version, json length, payload length
    N bytes    JSON header (utf-8, sorted keys) with an "arrays" list
    M bytes    raw little-endian arrays, concatenated in header order

Each entry of ``header["arrays"]`` is ``{"name", "dtype", "shape"}``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

MAGIC = b"FCDTNSR\x00"
VERSION = 1
PREAMBLE_SIZE = 64
_PREAMBLE = struct.Struct("<8sHHIQ")


class TensorFileError(ValueError):
    pass


class MalformedHeaderError(TensorFileError):
    pass


class TruncatedPayloadError(TensorFileError):
    pass


class DimensionMismatchError(TensorFileError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(header: dict, arrays: Dict[str, np.ndarray]) -> bytes:
    header = dict(header)
    specs, chunks = [], []
    for name, arr in arrays.items():
        le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        specs.append({"name": name, "dtype": le.dtype.str, "shape": list(le.shape)})
        chunks.append(le.tobytes())
    header["arrays"] = specs
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(chunks)
    pre = _PREAMBLE.pack(MAGIC, VERSION, 0, len(blob), len(payload))
    return pre.ljust(PREAMBLE_SIZE, b"\x00") + blob + payload


def loads(data: bytes) -> Tuple[dict, Dict[str, np.ndarray]]:
    if len(data) < PREAMBLE_SIZE:
        raise MalformedHeaderError("file shorter than the 64-byte preamble")
    magic, version, _, hlen, plen = _PREAMBLE.unpack_from(data, 0)
    if magic != MAGIC:
        raise MalformedHeaderError(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedHeaderError(f"unsupported version {version}")
    if len(data) < PREAMBLE_SIZE + hlen:
        raise MalformedHeaderError("JSON header truncated")
    try:
        header = json.loads(data[PREAMBLE_SIZE:PREAMBLE_SIZE + hlen].decode("utf-8"))
        specs = header["arrays"]
        sizes = []
        for s in specs:
            dt = np.dtype(s["dtype"])
            shape = tuple(int(n) for n in s["shape"])
            sizes.append((s["name"], dt, shape, dt.itemsize * int(np.prod(shape, dtype=np.int64))))
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedHeaderError(f"unreadable JSON header: {exc}") from exc

    payload = data[PREAMBLE_SIZE + hlen:]
    if len(payload) < plen:
        raise TruncatedPayloadError(f"payload has {len(payload)} of {plen} bytes")
    if len(payload) > plen:
        raise DimensionMismatchError(f"{len(payload) - plen} trailing bytes after payload")
    expected = sum(n for *_, n in sizes)
    if expected != plen:
        raise DimensionMismatchError(
            f"arrays need {expected} bytes but preamble declares {plen}"
        )

    arrays, off = {}, 0
    for name, dt, shape, nbytes in sizes:
        arr = np.frombuffer(payload, dtype=dt, count=nbytes // dt.itemsize, offset=off)
        arrays[name] = arr.reshape(shape).astype(dt.newbyteorder("="), copy=True)
        off += nbytes
    return header, arrays


def write_tensors(path, header: dict, arrays: Dict[str, np.ndarray]) -> None:
    atomic_write_bytes(path, dumps(header, arrays))


def read_tensors(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
