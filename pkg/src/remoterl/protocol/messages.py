"""Wire messages and their binary frames.

Frame layout (all integers little-endian)::

    u32  payload length in bytes
    u8   message type
    u16  actor id
    u32  step
    ...  payload, bit-packed MSB-first, zero-padded to a byte boundary

The header is ``HEADER_BYTES`` = 11 bytes and is not counted in the scheme's
bit accounting. Payloads are self-delimiting given the message type and the
run's configuration, so the padding can always be told apart from content.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from ..codec.bits import bits_to_bytes, bytes_to_bits
from ..errors import DecodeError

_HEADER = struct.Struct("<IBHI")
HEADER_BYTES = _HEADER.size
MAX_PAYLOAD = 1 << 24


class MsgType(enum.IntEnum):
    ORC_INDEX = 0
    ASC_ACTION = 1
    REWARD = 2
    EPOCH_MARK = 3
    ACK = 4          # actor -> controller: executed action or post-epoch digest


@dataclass(frozen=True)
class WireMessage:
    msg_type: MsgType
    actor_id: int
    step: int
    payload: bytes = b""
    nbits: int | None = None     # payload length in bits; None means 8 * len(payload)

    def __post_init__(self):
        n = 8 * len(self.payload) if self.nbits is None else self.nbits
        if not 8 * len(self.payload) - 7 <= n <= 8 * len(self.payload) or n < 0:
            raise ValueError(f"nbits={self.nbits} inconsistent with {len(self.payload)} payload bytes")
        object.__setattr__(self, "nbits", n)
        object.__setattr__(self, "msg_type", MsgType(self.msg_type))

    @classmethod
    def from_bits(cls, msg_type, actor_id: int, step: int, bits: str) -> "WireMessage":
        return cls(msg_type, actor_id, step, bits_to_bytes(bits), len(bits))

    @property
    def bits(self) -> str:
        return bytes_to_bits(self.payload)[: self.nbits]


def frame_encode(msg: WireMessage) -> bytes:
    return _HEADER.pack(len(msg.payload), int(msg.msg_type), msg.actor_id, msg.step) + msg.payload


def _parse_header(head: bytes) -> tuple[int, MsgType, int, int]:
    length, mtype, actor, step = _HEADER.unpack(head)
    try:
        mtype = MsgType(mtype)
    except ValueError:
        raise DecodeError(f"unknown message type {mtype}") from None
    if length > MAX_PAYLOAD:
        raise DecodeError(f"payload length {length} exceeds {MAX_PAYLOAD}")
    return length, mtype, actor, step


def frame_decode(raw: bytes) -> WireMessage:
    """Decode exactly one frame. The payload comes back whole bytes (padding included)."""
    if len(raw) < HEADER_BYTES:
        raise DecodeError(f"truncated frame header ({len(raw)} of {HEADER_BYTES} bytes)")
    length, mtype, actor, step = _parse_header(raw[:HEADER_BYTES])
    body = raw[HEADER_BYTES:]
    if len(body) != length:
        raise DecodeError(f"frame payload is {len(body)} bytes, header says {length}")
    return WireMessage(mtype, actor, step, bytes(body))


def _read_exact(stream, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise DecodeError(f"stream ended after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


def read_frame(stream) -> WireMessage:
    """Read one frame from a binary file-like object."""
    length, mtype, actor, step = _parse_header(_read_exact(stream, HEADER_BYTES))
    return WireMessage(mtype, actor, step, _read_exact(stream, length))
