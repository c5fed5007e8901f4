"""Binary checkpoint format.

Layout (all integers little-endian):

    magic           4 bytes  b"WONN"
    format_version  u32
    metadata_length u32
    metadata        UTF-8 JSON, metadata_length bytes
    tensors         zero or more records until end of file:
        name_length u32
        name        UTF-8
        dtype       u8   (0 = float32; the only defined code)
        rank        u8
        dims        rank x u64
        payload     raw little-endian float32, prod(dims) * 4 bytes

Tensors are written in sorted name order so identical parameters always
produce identical bytes. Save requires finite float32 arrays (NaN or inf
would round-trip silently but never represents a usable model, so it is
rejected up front); the round trip save -> load is bit-exact. Every
malformed condition (bad magic, version from the future, truncation
anywhere, unknown dtype code, duplicate or undecodable names, bad
metadata) raises CheckpointError.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .errors import CheckpointError, NumericError, ShapeError

__all__ = ["MAGIC", "FORMAT_VERSION", "save_checkpoint", "load_checkpoint",
           "checkpoint_bytes", "parse_checkpoint"]

MAGIC = b"WONN"
FORMAT_VERSION = 1
_DTYPE_F32 = 0
_MAX_NAME = 1 << 16
_MAX_RANK = 32


def checkpoint_bytes(params: dict, metadata: dict) -> bytes:
    """Serialize named float32 tensors plus JSON metadata."""
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    for name in sorted(params):
        arr = params[name]
        if not isinstance(arr, np.ndarray) or arr.dtype != np.float32:
            raise ShapeError(
                f"checkpoint tensors must be float32 ndarrays; '{name}' is "
                f"{getattr(arr, 'dtype', type(arr).__name__)}"
            )
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"tensor '{name}' has non-finite values")
        encoded = name.encode("utf-8")
        if len(encoded) >= _MAX_NAME:
            raise ShapeError(f"tensor name too long: {len(encoded)} bytes")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<BB", _DTYPE_F32, arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def save_checkpoint(params: dict, metadata: dict, path) -> None:
    blob = checkpoint_bytes(params, metadata)
    with open(path, "wb") as fh:
        fh.write(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"truncated checkpoint: needed {n} bytes for {what}, "
                f"{len(self.blob) - self.pos} left"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def done(self) -> bool:
        return self.pos == len(self.blob)


def parse_checkpoint(blob: bytes) -> tuple:
    """(params, metadata) from checkpoint bytes; validates everything."""
    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    version = r.u32("format version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported format version {version} (supported: {FORMAT_VERSION})"
        )
    meta_len = r.u32("metadata length")
    raw_meta = r.take(meta_len, "metadata")
    try:
        metadata = json.loads(raw_meta.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"metadata is not valid UTF-8 JSON: {exc}") from exc

    params: dict = {}
    while not r.done():
        name_len = r.u32("tensor name length")
        if name_len == 0 or name_len >= _MAX_NAME:
            raise CheckpointError(f"implausible tensor name length {name_len}")
        try:
            name = r.take(name_len, "tensor name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"tensor name is not UTF-8: {exc}") from exc
        if name in params:
            raise CheckpointError(f"duplicate tensor name '{name}'")
        dtype = r.u8("dtype code")
        if dtype != _DTYPE_F32:
            raise CheckpointError(f"unknown dtype code {dtype} for '{name}'")
        rank = r.u8("rank")
        if rank > _MAX_RANK:
            raise CheckpointError(f"implausible rank {rank} for '{name}'")
        dims = tuple(r.u64(f"dim {i} of '{name}'") for i in range(rank))
        count = 1
        for dim in dims:
            count *= dim
        if count > (1 << 32):
            raise CheckpointError(f"implausible tensor size {count} for '{name}'")
        payload = r.take(count * 4, f"payload of '{name}'")
        arr = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
        params[name] = arr
    return params, metadata


def load_checkpoint(path) -> tuple:
    """(params, metadata) from a checkpoint file."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    return parse_checkpoint(blob)
