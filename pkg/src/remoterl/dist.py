"""Policy distributions: categorical and diagonal Gaussian.

All information quantities are in bits. Sampling consumes uniforms from
:mod:`remoterl.prng` with fixed conventions:

* Categorical: one uniform at the key's counter, inverse-CDF linear scan in
  index order.
* DiagGaussian of dimension ``d`` at counter ``c``: dimension ``k`` uses the
  uniforms at counters ``2*d*c + 2*k`` and ``2*d*c + 2*k + 1`` (Box-Muller,
  ``z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import prng

EPS_FLOOR = 1e-6
STD_MIN = 1e-4
STD_MAX = 1e3
LN2 = math.log(2.0)
_LOG_2PI = math.log(2.0 * math.pi)


class DistributionError(ValueError):
    """Family or dimension mismatch between distributions or actions."""


def _apply_floor(p: np.ndarray) -> np.ndarray:
    """Pin small entries at the floor and rescale the rest to keep the sum at 1."""
    if p.size * EPS_FLOOR >= 1.0:
        return np.full(p.size, 1.0 / p.size)
    pinned = p < EPS_FLOOR
    while True:
        scale = (1.0 - pinned.sum() * EPS_FLOOR) / p[~pinned].sum()
        q = np.where(pinned, EPS_FLOOR, p * scale)
        more = ~pinned & (q < EPS_FLOOR)
        if not more.any():
            return q
        pinned |= more


@dataclass(frozen=True, eq=False)
class Categorical:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise DistributionError("categorical probs must be a non-empty vector")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DistributionError("categorical probs must be finite and non-negative")
        p = p / p.sum()
        if p.min() < EPS_FLOOR:
            p = _apply_floor(p)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "_logp", np.log(p))

    @classmethod
    def from_logits(cls, logits) -> "Categorical":
        z = np.asarray(logits, dtype=np.float64)
        z = np.exp(z - z.max())
        return cls(z / z.sum())

    @property
    def n(self) -> int:
        return self.probs.size

    @property
    def log_probs(self) -> np.ndarray:
        """Natural-log probabilities."""
        return self._logp

    def __eq__(self, other):
        return isinstance(other, Categorical) and np.array_equal(self.probs, other.probs)


@dataclass(frozen=True, eq=False)
class DiagGaussian:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=np.float64)).copy()
        sd = np.atleast_1d(np.asarray(self.std, dtype=np.float64))
        if mu.ndim != 1 or mu.shape != sd.shape:
            raise DistributionError("mean and std must be vectors of equal length")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sd))):
            raise DistributionError("gaussian parameters must be finite")
        sd = np.clip(sd, STD_MIN, STD_MAX)
        mu.setflags(write=False)
        sd.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "std", sd)

    @property
    def dim(self) -> int:
        return self.mean.size

    def __eq__(self, other):
        return (
            isinstance(other, DiagGaussian)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.std, other.std)
        )


Distribution = Union[Categorical, DiagGaussian]


def check_same_family(p, q) -> None:
    if type(p) is not type(q):
        raise DistributionError(f"family mismatch: {type(p).__name__} vs {type(q).__name__}")
    if isinstance(p, Categorical) and p.n != q.n:
        raise DistributionError(f"support size mismatch: {p.n} vs {q.n}")
    if isinstance(p, DiagGaussian) and p.dim != q.dim:
        raise DistributionError(f"dimension mismatch: {p.dim} vs {q.dim}")


def log_prob_nats(d: Distribution, x) -> float:
    if isinstance(d, Categorical):
        i = int(x)
        if not 0 <= i < d.n or i != x:
            raise DistributionError(f"action {x!r} outside categorical support of size {d.n}")
        return float(d.log_probs[i])
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != d.mean.shape:
        raise DistributionError(f"action dimension {x.size} != distribution dimension {d.dim}")
    z = (x - d.mean) / d.std
    return float(np.sum(-0.5 * z * z - np.log(d.std) - 0.5 * _LOG_2PI))


def log_prob(d: Distribution, x) -> float:
    """Base-2 log density (or mass) of ``x``."""
    return log_prob_nats(d, x) / LN2


def kl(p: Distribution, q: Distribution) -> float:
    """D(p || q) in bits."""
    check_same_family(p, q)
    if isinstance(p, Categorical):
        val = float(np.sum(p.probs * (p.log_probs - q.log_probs)))
    else:
        var_p = p.std**2
        var_q = q.std**2
        val = float(
            np.sum(
                np.log(q.std / p.std)
                + (var_p + (p.mean - q.mean) ** 2) / (2.0 * var_q)
                - 0.5
            )
        )
    return max(val, 0.0) / LN2


def entropy(d: Distribution) -> float:
    """Shannon (categorical) or differential (Gaussian) entropy in bits."""
    if isinstance(d, Categorical):
        return float(-np.sum(d.probs * d.log_probs)) / LN2
    return float(np.sum(0.5 * (_LOG_2PI + 1.0) + np.log(d.std))) / LN2


def _categorical_from_uniform(probs: np.ndarray, u: float) -> int:
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    # u landed in the rounding gap above the last partial sum
    return probs.size - 1


def sample(d: Distribution, key: prng.StreamKey):
    """Draw one action deterministically from ``d`` using ``key``."""
    if isinstance(d, Categorical):
        return _categorical_from_uniform(d.probs, prng.uniform64(key))
    z = standard_normals(key, key.counter, d.dim)
    return d.mean + d.std * z


def standard_normals(key: prng.StreamKey, counters, dim: int) -> np.ndarray:
    """Box-Muller normals for each counter; shape ``counters.shape + (dim,)``."""
    c = np.asarray(counters, dtype=np.uint64)
    base = c[..., None] * np.uint64(2 * dim) + np.arange(0, 2 * dim, 2, dtype=np.uint64)
    u1 = prng.uniform_array(key, base)
    u2 = prng.uniform_array(key, base + np.uint64(1))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)


def sample_array(d: Distribution, key: prng.StreamKey, counters) -> np.ndarray:
    """``sample(d, key.with_(counter=c))`` for each ``c`` in ``counters``.

    Returns integer indices for categoricals, an ``(n, dim)`` array otherwise.
    """
    if isinstance(d, Categorical):
        u = prng.uniform_array(key, counters)
        cdf = np.cumsum(d.probs)
        idx = np.searchsorted(cdf, u, side="right")
        return np.minimum(idx, d.n - 1)
    z = standard_normals(key, counters, d.dim)
    return d.mean + d.std * z


def log_prob_nats_array(d: Distribution, xs) -> np.ndarray:
    if isinstance(d, Categorical):
        return d.log_probs[np.asarray(xs, dtype=np.int64)]
    z = (np.asarray(xs) - d.mean) / d.std
    return np.sum(-0.5 * z * z - np.log(d.std) - 0.5 * _LOG_2PI, axis=-1)

