"""Ordered random coding: remote generation of a sample from P given Q.

Encoder and decoder share Q and a :class:`~remoterl.prng.StreamKey`. The n-th
candidate is ``sample(Q, key[purpose=CANDIDATE, counter=n])`` and the n-th
race increment uses ``exp1(key[purpose=EXPONENTIAL, counter=n])``. Only the
winning index travels; the decoder regenerates that one candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import dist, prng
from ..errors import RemoteRLError, UsageError
from .bits import elias_delta_length

# Candidates are scored in growing prefixes; the race usually stops early when
# P is close to Q, and a prefix gives the same result as the full list.
_PREFIXES = (8, 64)


@dataclass(frozen=True)
class OrcConfig:
    """Candidate-list size and index-prior exponent (default ``1 + 1/N``)."""

    N: int = 256
    zipf_alpha: float | None = None

    def __post_init__(self):
        if self.N < 2 or self.N & (self.N - 1):
            raise UsageError(f"N must be a power of two >= 2, got {self.N}")
        if self.zipf_alpha is None:
            object.__setattr__(self, "zipf_alpha", 1.0 + 1.0 / self.N)
        if not self.zipf_alpha > 1.0:
            raise UsageError(f"zipf_alpha must exceed 1, got {self.zipf_alpha}")


@dataclass(frozen=True)
class EncodedMessage:
    index: int
    ideal_bits: float
    wire_bits: int


@lru_cache(maxsize=64)
def _zipf_log2_normalizer(N: int, alpha: float) -> float:
    m = np.arange(1, N + 1, dtype=np.float64)
    return math.log2(float(np.sum(m ** (-alpha))))


def index_ideal_bits(n: int, cfg: OrcConfig) -> float:
    """-log2 p(n) under the Zipf(alpha) prior truncated to 1..N."""
    if not 1 <= n <= cfg.N:
        raise UsageError(f"index {n} outside 1..{cfg.N}")
    return cfg.zipf_alpha * math.log2(n) + _zipf_log2_normalizer(cfg.N, cfg.zipf_alpha)


def _log_w_min(P: dist.Distribution, Q: dist.Distribution) -> float:
    if isinstance(P, dist.Categorical):
        return float(np.min(Q.log_probs - P.log_probs))
    # density ratio infimum over an unbounded support
    return -math.inf


def _race(P, Q, cfg: OrcConfig, key: prng.StreamKey, lo: int, hi: int, t0: float):
    """Scores for candidates ``lo..hi-1`` (1-based) continuing the race from ``t0``."""
    n = np.arange(lo, hi, dtype=np.int64)
    z = dist.sample_array(Q, key.with_(purpose=prng.Purpose.CANDIDATE), n)
    e = prng.exp1_array(key.with_(purpose=prng.Purpose.EXPONENTIAL), n)
    v = cfg.N / (cfg.N - n + 1).astype(np.float64)
    inc = v * e
    inc[0] += t0
    t = np.cumsum(inc)
    log_ratio = dist.log_prob_nats_array(Q, z) - dist.log_prob_nats_array(P, z)
    return z, t, np.log(t) + log_ratio


def orc_encode(P: dist.Distribution, Q: dist.Distribution, cfg: OrcConfig, key: prng.StreamKey):
    """Run the ordered random coding race; returns ``(action, EncodedMessage)``.

    Sequential semantics: running minimum of ``s_n = t_n Q(z_n)/P(z_n)`` with
    strict improvement, stopping once ``s* <= t_n * w_min`` or after N
    candidates. Evaluated over candidate prefixes with identical results.
    """
    dist.check_same_family(P, Q)
    log_w_min = _log_w_min(P, Q)
    best_log_s = math.inf
    best_n = 0
    best_z = None
    lo, t = 1, 0.0
    # with w_min = 0 the race can never stop early, so prefixes would only add work
    prefixes = _PREFIXES if log_w_min > -math.inf else ()
    for hi in (*[p + 1 for p in prefixes if p < cfg.N], cfg.N + 1):
        z, ts, log_s = _race(P, Q, cfg, key, lo, hi, t)
        if not np.all(np.isfinite(log_s)):
            raise RemoteRLError("non-finite importance ratio in ordered random coding")
        run_min = np.minimum.accumulate(log_s)
        run_min = np.minimum(run_min, best_log_s)
        stop = np.nonzero(run_min <= np.log(ts) + log_w_min)[0]
        last = int(stop[0]) if stop.size else len(log_s) - 1
        seg = log_s[: last + 1]
        j = int(np.argmin(seg))
        if seg[j] < best_log_s:
            best_log_s, best_n, best_z = float(seg[j]), lo + j, z[j]
        if stop.size:
            break
        lo, t = hi, float(ts[-1])
    msg = EncodedMessage(best_n, index_ideal_bits(best_n, cfg), elias_delta_length(best_n))
    return _as_action(Q, best_z), msg


def orc_decode(msg: EncodedMessage, Q: dist.Distribution, key: prng.StreamKey):
    """Regenerate candidate ``msg.index`` from Q; never needs P."""
    return dist.sample(Q, key.with_(purpose=prng.Purpose.CANDIDATE, counter=msg.index))


def orc_encode_reference(P, Q, cfg: OrcConfig, key: prng.StreamKey):
    """Literal scalar loop, one candidate at a time. Slow; used as a cross-check."""
    t, n, best_log_s, best_n = 0.0, 1, math.inf, 0
    log_w_min = _log_w_min(P, Q)
    while True:
        z = dist.sample(Q, key.with_(purpose=prng.Purpose.CANDIDATE, counter=n))
        v = cfg.N / float(cfg.N - n + 1)
        e = prng.exp1(key.with_(purpose=prng.Purpose.EXPONENTIAL, counter=n))
        t = t + v * e
        log_s = math.log(t) + dist.log_prob_nats(Q, z) - dist.log_prob_nats(P, z)
        if log_s < best_log_s:
            best_log_s, best_n = log_s, n
        n += 1
        if best_log_s <= math.log(t) + log_w_min or n > cfg.N:
            break
    return best_n


def _as_action(Q, z):
    if isinstance(Q, dist.Categorical):
        return int(z)
    return np.array(z, dtype=np.float64)


def _batch_race(P, Q, cfg: OrcConfig, keys, lo: int, hi: int, t0: np.ndarray):
    """Candidates ``lo..hi-1`` for every key; arrays of shape ``(len(keys), hi - lo)``."""
    n = np.arange(lo, hi, dtype=np.int64)
    v = cfg.N / (cfg.N - n + 1).astype(np.float64)
    e = -np.log1p(-prng.uniform_grid([k.with_(purpose=prng.Purpose.EXPONENTIAL) for k in keys], n))
    t = np.cumsum(v * e, axis=1) + t0[:, None]
    cand_keys = [k.with_(purpose=prng.Purpose.CANDIDATE) for k in keys]
    if isinstance(Q, dist.Categorical):
        u = prng.uniform_grid(cand_keys, n)
        z = np.minimum(np.searchsorted(np.cumsum(Q.probs), u, side="right"), Q.n - 1)
        log_ratio = Q.log_probs[z] - P.log_probs[z]
    else:
        z = np.stack([dist.sample_array(Q, k, n) for k in cand_keys])
        log_ratio = dist.log_prob_nats_array(Q, z) - dist.log_prob_nats_array(P, z)
    return z, t, np.log(t) + log_ratio


def orc_encode_batch(P, Q, cfg: OrcConfig, keys, chunk: int = 2048):
    """Encode one fixed (P, Q) pair under many keys at once.

    Returns ``(actions, indices)``; element-wise equal to :func:`orc_encode`
    for each key. Used by Monte Carlo validation, not by the protocol.
    """
    dist.check_same_family(P, Q)
    log_w_min = _log_w_min(P, Q)
    N = cfg.N
    prefixes = _PREFIXES if log_w_min > -math.inf else ()
    bounds = [p + 1 for p in prefixes if p < N] + [N + 1]
    actions, indices = [], []
    for start in range(0, len(keys), chunk):
        ks = keys[start:start + chunk]
        m = len(ks)
        best_s = np.full(m, np.inf)
        best_n = np.zeros(m, dtype=np.int64)
        best_z = None
        t = np.zeros(m)
        live = np.arange(m)
        lo = 1
        for hi in bounds:
            z, ts, log_s = _batch_race(P, Q, cfg, [ks[i] for i in live], lo, hi, t[live])
            if best_z is None:
                best_z = np.zeros((m,) + z.shape[2:], dtype=z.dtype)
            run_min = np.minimum(np.minimum.accumulate(log_s, axis=1), best_s[live, None])
            stopped = run_min <= np.log(ts) + log_w_min
            halted = stopped.any(axis=1)
            last = np.where(halted, stopped.argmax(axis=1), hi - lo - 1)
            cols = np.arange(hi - lo)
            masked = np.where(cols[None, :] <= last[:, None], log_s, np.inf)
            j = masked.argmin(axis=1)
            rows = np.arange(live.size)
            better = masked[rows, j] < best_s[live]
            upd = live[better]
            best_s[upd] = masked[rows, j][better]
            best_n[upd] = lo + j[better]
            best_z[upd] = z[rows, j][better]
            t[live] = ts[:, -1]
            live = live[~halted]
            lo = hi
            if not live.size:
                break
        actions.append(best_z)
        indices.append(best_n)
    return np.concatenate(actions), np.concatenate(indices)
