"""Counter-based deterministic randomness.

Every random number in a run is a pure function of a :class:`StreamKey`.
Encoder and decoder therefore regenerate identical candidate streams without
exchanging state, and can jump straight to any counter.

Mixing function (normative, reproduced bit-for-bit by the test vectors in
``tests/test_prng.py``)::

    M64 = 2**64 - 1
    GOLDEN = 0x9E3779B97F4A7C15

    fmix(z):                       # SplitMix64 finalizer
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & M64
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB & M64
        return z ^ (z >> 31)

    base(key):
        h = fmix((run_seed + GOLDEN) & M64)
        h = fmix(h ^ ((episode << 32) | step))
        h = fmix(h ^ ((actor_id << 8) | purpose))
        return h

    bits64(key) = fmix((base(key) + (counter + 1) * GOLDEN) & M64)
    uniform64(key) = (bits64(key) >> 11) * 2**-53

``base`` is a SplitMix64 seed; the counter indexes into that SplitMix64
stream, so counters of one base are exactly consecutive SplitMix64 outputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

M64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


class Purpose(enum.IntEnum):
    CANDIDATE = 0
    EXPONENTIAL = 1
    ENV_NOISE = 2
    PARAM_INIT = 3
    ACTION_SAMPLE = 4
    SHUFFLE = 5


@dataclass(frozen=True)
class StreamKey:
    """Coordinate of one random value; see the module docstring for the hash."""

    run_seed: int
    episode: int = 0
    step: int = 0
    actor_id: int = 0
    purpose: Purpose = Purpose.CANDIDATE
    counter: int = 0

    def __post_init__(self):
        _check_width("run_seed", self.run_seed, 64)
        _check_width("episode", self.episode, 32)
        _check_width("step", self.step, 32)
        _check_width("actor_id", self.actor_id, 16)
        _check_width("counter", self.counter, 64)
        if not isinstance(self.purpose, Purpose):
            object.__setattr__(self, "purpose", Purpose(self.purpose))

    def with_(self, **changes) -> "StreamKey":
        return replace(self, **changes)


def _check_width(name: str, value: int, bits: int) -> None:
    if not 0 <= value < (1 << bits):
        raise ValueError(f"{name}={value} does not fit in an unsigned {bits}-bit field")


def fmix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MUL1) & M64
    z = ((z ^ (z >> 27)) * _MUL2) & M64
    return z ^ (z >> 31)


def key_base(key: StreamKey) -> int:
    """SplitMix64 seed for all counters of ``key`` (counter ignored)."""
    h = fmix((key.run_seed + GOLDEN) & M64)
    h = fmix(h ^ ((key.episode << 32) | key.step))
    h = fmix(h ^ ((key.actor_id << 8) | int(key.purpose)))
    return h


def bits64(key: StreamKey) -> int:
    return fmix((key_base(key) + (key.counter + 1) * GOLDEN) & M64)


def uniform64(key: StreamKey) -> float:
    """Uniform value in [0, 1) with 53-bit precision."""
    return (bits64(key) >> 11) * _INV_2_53


def exp1(key: StreamKey) -> float:
    """Exp(1) draw by inversion, ``-ln(1 - u)``."""
    return -math.log1p(-uniform64(key))


# Vectorized forms: same stream, many counters at once.

_U_MUL1 = np.uint64(_MUL1)
_U_MUL2 = np.uint64(_MUL2)
_U_GOLDEN = np.uint64(GOLDEN)


def _fmix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _U_MUL1
    z = (z ^ (z >> np.uint64(27))) * _U_MUL2
    return z ^ (z >> np.uint64(31))


def bits64_array(key: StreamKey, counters) -> np.ndarray:
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key_base(key)) + (c + np.uint64(1)) * _U_GOLDEN
        return _fmix_array(z)


def uniform_array(key: StreamKey, counters) -> np.ndarray:
    """``uniform64(key.with_(counter=c))`` for every ``c`` in ``counters``."""
    return (bits64_array(key, counters) >> np.uint64(11)).astype(np.float64) * _INV_2_53


def exp1_array(key: StreamKey, counters) -> np.ndarray:
    return -np.log1p(-uniform_array(key, counters))


def permutation(key: StreamKey, n: int) -> np.ndarray:
    """Deterministic permutation of ``range(n)`` (stable argsort of uniforms)."""
    return np.argsort(uniform_array(key, np.arange(n)), kind="stable")


def uniform_grid(keys, counters) -> np.ndarray:
    """Uniforms for every (key, counter) pair; shape ``(len(keys), len(counters))``."""
    bases = np.array([key_base(k) for k in keys], dtype=np.uint64)
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = bases[:, None] + (c[None, :] + np.uint64(1)) * _U_GOLDEN
        z = _fmix_array(z)
    return (z >> np.uint64(11)).astype(np.float64) * _INV_2_53
