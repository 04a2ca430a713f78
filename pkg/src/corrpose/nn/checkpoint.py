"""Versioned little-endian binary checkpoints with CRC integrity checking.

Layout: magic "CPK1" | u32 version | u32 meta_len | meta JSON | u32 n_tensors
| n blocks of [u16 name_len | name | u8 dtype | u8 rank | u32 dims... | raw]
| u32 crc32 of everything between the magic and the crc.
"""
from __future__ import annotations

import json
import struct
import zlib

import numpy as np

MAGIC = b"CPK1"
VERSION = 1

_DTYPES = {0: "<f8", 1: "<f4", 2: "<i8"}
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1, np.dtype(np.int64): 2}


class CheckpointError(RuntimeError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def save_checkpoint(path, tensors: dict, meta: dict | None = None):
    """Write named arrays plus a JSON metadata dict."""
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    body = bytearray()
    body += struct.pack("<I", VERSION)
    body += struct.pack("<I", len(meta_bytes))
    body += meta_bytes
    body += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        if arr.dtype not in _DTYPE_CODES:
            arr = arr.astype(np.float64)
        name_b = name.encode("utf-8")
        body += struct.pack("<H", len(name_b))
        body += name_b
        body += struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
        body += np.ascontiguousarray(arr).astype(_DTYPES[_DTYPE_CODES[arr.dtype]]).tobytes()
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(body)
        fh.write(struct.pack("<I", crc))


def load_checkpoint(path):
    """Read back (tensors, meta); raises distinct errors for version/corruption."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointCorruptError("not a checkpoint file (bad magic)")
    body = blob[4:-4]
    (crc_stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise CheckpointCorruptError("checksum mismatch (truncated or corrupted file)")
    off = 0

    def read(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(body):
            raise CheckpointCorruptError("unexpected end of checkpoint")
        vals = struct.unpack_from(fmt, body, off)
        off += size
        return vals

    (version,) = read("<I")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, expected {VERSION}")
    (meta_len,) = read("<I")
    if off + meta_len > len(body):
        raise CheckpointCorruptError("unexpected end of checkpoint (meta)")
    try:
        meta = json.loads(body[off:off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"bad metadata block: {exc}") from exc
    off += meta_len
    (n_tensors,) = read("<I")
    tensors = {}
    for _ in range(n_tensors):
        (name_len,) = read("<H")
        name = body[off:off + name_len].decode("utf-8")
        off += name_len
        code, rank = read("<BB")
        if code not in _DTYPES:
            raise CheckpointCorruptError(f"unknown dtype code {code} for {name}")
        shape = read(f"<{rank}I") if rank else ()
        dt = np.dtype(_DTYPES[code])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize if shape else dt.itemsize
        if off + nbytes > len(body):
            raise CheckpointCorruptError(f"unexpected end of checkpoint in tensor {name}")
        arr = np.frombuffer(body, dtype=dt, count=max(int(np.prod(shape)) if shape else 1, 0),
                            offset=off).reshape(shape)
        off += nbytes
        tensors[name] = arr.copy()
    return tensors, meta
