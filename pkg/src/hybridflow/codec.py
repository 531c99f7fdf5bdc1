"""Pluggable payload codec boundary.

The reference codec is length-prefixed raw bytes: values are encoded to a
byte string and framed as a 4-byte big-endian length followed by the body.
Anything that needs a structured encoding (the workbench record types, task
arguments) layers on top of these helpers.
"""
from __future__ import annotations

import io
import pickle
import struct
from typing import Protocol

_LEN = struct.Struct(">I")


class Codec(Protocol):
    def encode(self, value: object) -> bytes: ...
    def decode(self, data: bytes) -> object: ...


class RawBytesCodec:
    """Identity codec for byte payloads; str is encoded as UTF-8."""

    def encode(self, value: object) -> bytes:
        if isinstance(value, bytes):
            return value
        if isinstance(value, bytearray):
            return bytes(value)
        if isinstance(value, str):
            return value.encode("utf-8")
        raise TypeError(f"raw codec only carries bytes or str, got {type(value).__name__}")

    def decode(self, data: bytes) -> object:
        return data


class PickleCodec:
    """General object codec used for task argument transfer."""

    def encode(self, value: object) -> bytes:
        return pickle.dumps(value, protocol=pickle.HIGHEST_PROTOCOL)

    def decode(self, data: bytes) -> object:
        return pickle.loads(data)


DEFAULT_CODEC = RawBytesCodec()
OBJECT_CODEC = PickleCodec()


def write_block(buf: io.BytesIO, data: bytes) -> None:
    buf.write(_LEN.pack(len(data)))
    buf.write(data)


def pack_blocks(blocks: list[bytes]) -> bytes:
    buf = io.BytesIO()
    buf.write(_LEN.pack(len(blocks)))
    for block in blocks:
        write_block(buf, block)
    return buf.getvalue()


def unpack_blocks(data: bytes) -> list[bytes]:
    view = memoryview(data)
    (count,) = _LEN.unpack_from(view, 0)
    pos = 4
    blocks: list[bytes] = []
    for _ in range(count):
        (size,) = _LEN.unpack_from(view, pos)
        pos += 4
        blocks.append(bytes(view[pos:pos + size]))
        pos += size
    return blocks
