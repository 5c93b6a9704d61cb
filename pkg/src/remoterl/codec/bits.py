"""Bitstrings, the Elias-delta index code and fixed-width action payloads.

Bitstrings are ``str`` objects over ``"01"``, most significant bit first.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from ..errors import DecodeError, UsageError
from ..spaces import ActionSpace, Box, Discrete


def elias_delta_encode(n: int) -> str:
    if n < 1:
        raise UsageError(f"Elias-delta codes positive integers, got {n}")
    low = n.bit_length() - 1
    m = low + 1
    gamma = "0" * (m.bit_length() - 1) + format(m, "b")
    return gamma + (format(n, "b")[1:] if low else "")


def elias_delta_length(n: int) -> int:
    if n < 1:
        raise UsageError(f"Elias-delta codes positive integers, got {n}")
    low = n.bit_length() - 1
    return low + 2 * ((low + 1).bit_length() - 1) + 1


def elias_delta_decode(bits: str, pos: int = 0) -> tuple[int, int]:
    """Decode one codeword starting at ``pos``; returns ``(n, next_pos)``."""
    zeros = 0
    while pos + zeros < len(bits) and bits[pos + zeros] == "0":
        zeros += 1
    start = pos + zeros
    end = start + zeros + 1
    if end > len(bits):
        raise DecodeError("truncated Elias-delta length prefix")
    m = int(bits[start:end], 2)
    low = m - 1
    if end + low > len(bits):
        raise DecodeError("truncated Elias-delta payload")
    n = (1 << low) | (int(bits[end:end + low], 2) if low else 0)
    return n, end + low


def asc_bits(space: ActionSpace) -> int:
    """Cost of sending one action verbatim."""
    if isinstance(space, Discrete):
        return math.ceil(math.log2(space.n)) if space.n > 1 else 0
    return 32 * space.dim


def action_encode(action, space: ActionSpace) -> str:
    if isinstance(space, Discrete):
        width = asc_bits(space)
        a = space.canonicalize(action)
        return format(a, f"0{width}b") if width else ""
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.size != space.dim:
        raise UsageError(f"action has {a.size} components, expected {space.dim}")
    raw = struct.pack(f">{space.dim}f", *a.tolist())
    return bytes_to_bits(raw)


def action_decode(bits: str, space: ActionSpace):
    if len(bits) < asc_bits(space):
        raise DecodeError("truncated action payload")
    if isinstance(space, Discrete):
        width = asc_bits(space)
        a = int(bits[:width], 2) if width else 0
        if a >= space.n:
            raise DecodeError(f"action index {a} outside Discrete({space.n})")
        return a
    raw = bits_to_bytes(bits[: 32 * space.dim])
    return np.array(struct.unpack(f">{space.dim}f", raw), dtype=np.float64)


def bytes_to_bits(raw: bytes) -> str:
    return "".join(format(b, "08b") for b in raw)


def bits_to_bytes(bits: str) -> bytes:
    """Pack MSB-first, zero-padding the final byte."""
    pad = (-len(bits)) % 8
    bits = bits + "0" * pad
    return bytes(int(bits[i:i + 8], 2) for i in range(0, len(bits), 8))
