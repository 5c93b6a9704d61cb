"""Reward payloads for the reward-sending baselines.

FR    IEEE-754 binary32, 32 bits.
QR16  IEEE-754 binary16 (round to nearest even, saturating at +-65504).
QR8/QR4  uniform mid-rise quantizer over [r_min, r_max] with 2**k levels,
      clipped to range, midpoint reconstruction; the level is sent as a
      k-bit unsigned integer.
"""

from __future__ import annotations

import enum
import math
import struct

import numpy as np

from ..errors import DecodeError, ProtocolError, UsageError
from .bits import bits_to_bytes, bytes_to_bits

_F16_MAX = 65504.0


class RewardScheme(enum.Enum):
    FR = 32
    QR16 = 16
    QR8 = 8
    QR4 = 4

    @property
    def bits(self) -> int:
        return self.value


def _levels(scheme: RewardScheme, value_range) -> tuple[float, float, int]:
    r_min, r_max = float(value_range[0]), float(value_range[1])
    if not r_min < r_max:
        raise UsageError(f"quantizer range must satisfy r_min < r_max, got {value_range}")
    return r_min, r_max, 1 << scheme.bits


def quantize_level(r: float, scheme: RewardScheme, value_range) -> int:
    r_min, r_max, levels = _levels(scheme, value_range)
    step = (r_max - r_min) / levels
    return min(max(math.floor((r - r_min) / step), 0), levels - 1)


def level_value(level: int, scheme: RewardScheme, value_range) -> float:
    r_min, r_max, levels = _levels(scheme, value_range)
    step = (r_max - r_min) / levels
    return r_min + (level + 0.5) * step


def reward_encode(r: float, scheme: RewardScheme, value_range=None) -> str:
    r = float(r)
    if math.isnan(r):
        raise ProtocolError("cannot encode a NaN reward")
    if scheme is RewardScheme.FR:
        return bytes_to_bits(struct.pack(">f", r))
    if scheme is RewardScheme.QR16:
        half = np.float16(np.clip(r, -_F16_MAX, _F16_MAX))
        return format(int(half.view(np.uint16)), "016b")
    if value_range is None:
        raise UsageError(f"{scheme.name} needs a reward range")
    return format(quantize_level(r, scheme, value_range), f"0{scheme.bits}b")


def reward_decode(bits: str, scheme: RewardScheme, value_range=None) -> float:
    if len(bits) < scheme.bits:
        raise DecodeError(f"{scheme.name} payload needs {scheme.bits} bits, got {len(bits)}")
    bits = bits[: scheme.bits]
    if scheme is RewardScheme.FR:
        return struct.unpack(">f", bits_to_bytes(bits))[0]
    if scheme is RewardScheme.QR16:
        return float(np.uint16(int(bits, 2)).view(np.float16))
    if value_range is None:
        raise UsageError(f"{scheme.name} needs a reward range")
    return level_value(int(bits, 2), scheme, value_range)
