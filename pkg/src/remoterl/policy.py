"""Tiny tanh MLP policies with hand-written gradients.

Parameters live in one flat float64 vector laid out as
``[W1, b1, W2, b2, ..., W_out, b_out, (log_std)]`` with each ``W`` stored
row-major with shape ``(fan_in, fan_out)``. Updates return new values; nothing
is mutated in place, so a controller mirror and an actor clone fed the same
data stay bit-identical.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dist, prng
from .errors import DecodeError, TrainingError, UsageError

LOG_STD_MIN = math.log(dist.STD_MIN)
LOG_STD_MAX = math.log(dist.STD_MAX)

HEADS = ("categorical", "gaussian", "value")


@dataclass(frozen=True)
class Arch:
    """Network shape. ``out_dim`` is |A|, the action dimension, or 1 for values."""

    obs_dim: int
    out_dim: int
    head: str = "categorical"
    hidden: tuple[int, ...] = (32, 32)
    out_scale: float = 0.01
    init_log_std: float = 0.0

    def __post_init__(self):
        if self.head not in HEADS:
            raise UsageError(f"unknown head {self.head!r}; expected one of {HEADS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def layer_sizes(self) -> list[tuple[int, int]]:
        dims = [self.obs_dim, *self.hidden, self.out_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        n = sum(i * o + o for i, o in self.layer_sizes)
        return n + (self.out_dim if self.head == "gaussian" else 0)


@dataclass(frozen=True, eq=False)
class PolicyParams:
    arch: Arch
    flat: np.ndarray

    def __post_init__(self):
        flat = np.asarray(self.flat, dtype=np.float64)
        if flat.shape != (self.arch.n_params,):
            raise UsageError(f"expected {self.arch.n_params} parameters, got {flat.shape}")
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out, pos = [], 0
        for i, o in self.arch.layer_sizes:
            w = self.flat[pos:pos + i * o].reshape(i, o)
            pos += i * o
            b = self.flat[pos:pos + o]
            pos += o
            out.append((w, b))
        return out

    @property
    def log_std(self) -> np.ndarray | None:
        if self.arch.head != "gaussian":
            return None
        return self.flat[-self.arch.out_dim:]

    def digest(self) -> int:
        return params_digest(self)


def init_params(seed: int, arch: Arch, stream: int = 0) -> PolicyParams:
    """Fan-in-scaled uniform weights, zero biases, from ``Purpose.PARAM_INIT``.

    ``stream`` separates networks initialized from the same seed (e.g. the
    value network from the policy).
    """
    key = prng.StreamKey(seed, episode=stream, purpose=prng.Purpose.PARAM_INIT)
    parts = []
    n_layers = len(arch.layer_sizes)
    for li, (i, o) in enumerate(arch.layer_sizes):
        bound = 1.0 / math.sqrt(i)
        if li == n_layers - 1:
            bound *= arch.out_scale
        u = prng.uniform_array(key.with_(actor_id=li), np.arange(i * o))
        parts.append((2.0 * u - 1.0) * bound)
        parts.append(np.zeros(o))
    if arch.head == "gaussian":
        parts.append(np.full(arch.out_dim, float(arch.init_log_std)))
    return PolicyParams(arch, np.concatenate(parts))


def zero_params(arch: Arch) -> PolicyParams:
    flat = np.zeros(arch.n_params)
    if arch.head == "gaussian":
        flat[-arch.out_dim:] = arch.init_log_std
    return PolicyParams(arch, flat)


# ---------------------------------------------------------------- forward/backward


def mlp_forward(params: PolicyParams, X: np.ndarray):
    """Head outputs for a batch ``X`` of shape ``(B, obs_dim)`` plus a backprop cache."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.arch.obs_dim:
        raise UsageError(f"expected states of shape (B, {params.arch.obs_dim}), got {X.shape}")
    acts = [X]
    layers = params.layers()
    h = X
    for w, b in layers[:-1]:
        h = np.tanh(h @ w + b)
        acts.append(h)
    w, b = layers[-1]
    return h @ w + b, acts


def mlp_backward(params: PolicyParams, acts, dout: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(dout * out)`` w.r.t. the flat vector (log-std slot left zero)."""
    layers = params.layers()
    grads = []
    g = dout
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        a_in = acts[li]
        grads.append((a_in.T @ g, g.sum(axis=0)))
        if li:
            g = (g @ w.T) * (1.0 - a_in * a_in)
    flat = []
    for gw, gb in reversed(grads):
        flat.append(gw.ravel())
        flat.append(gb)
    if params.arch.head == "gaussian":
        flat.append(np.zeros(params.arch.out_dim))
    return np.concatenate(flat)


def forward(params: PolicyParams, state) -> dist.Distribution:
    """Action distribution at a single state."""
    s = np.asarray(state, dtype=np.float64).reshape(1, -1)
    out, _ = mlp_forward(params, s)
    if params.arch.head == "categorical":
        return dist.Categorical.from_logits(out[0])
    if params.arch.head == "gaussian":
        return dist.DiagGaussian(out[0], np.exp(params.log_std))
    raise UsageError("value networks do not define an action distribution")


def value(params: PolicyParams, states) -> np.ndarray:
    out, _ = mlp_forward(params, np.atleast_2d(states))
    return out[:, 0]


def value_loss_grad(params: PolicyParams, states, targets) -> tuple[float, np.ndarray]:
    """Mean squared error ``0.5 * mean((V - target)^2)`` and its gradient."""
    out, acts = mlp_forward(params, states)
    err = out[:, 0] - np.asarray(targets, dtype=np.float64)
    loss = 0.5 * float(np.mean(err * err))
    dout = (err / err.size)[:, None]
    return loss, mlp_backward(params, acts, dout)


@dataclass
class PolicyTerms:
    """Per-sample log-likelihood (nats) and entropy (nats), with a backward pass."""

    logp: np.ndarray
    entropy: np.ndarray
    _params: PolicyParams = field(repr=False)
    _acts: list = field(repr=False)
    _dlogp_dout: np.ndarray = field(repr=False)
    _dent_dout: np.ndarray = field(repr=False)
    _dlogp_dlogstd: np.ndarray | None = field(default=None, repr=False)

    def backward(self, w_logp, w_ent=None) -> np.ndarray:
        """Gradient of ``sum(w_logp * logp) + sum(w_ent * entropy)``."""
        w_logp = np.asarray(w_logp, dtype=np.float64).reshape(-1, 1)
        dout = w_logp * self._dlogp_dout
        if w_ent is not None:
            w_ent = np.broadcast_to(np.asarray(w_ent, dtype=np.float64), self.logp.shape)
            dout = dout + w_ent[:, None] * self._dent_dout
        g = mlp_backward(self._params, self._acts, dout)
        if self._dlogp_dlogstd is not None:
            d = self._params.arch.out_dim
            gls = (w_logp * self._dlogp_dlogstd).sum(axis=0)
            if w_ent is not None:
                gls = gls + float(np.sum(w_ent))
            g[-d:] += gls
        return g


def policy_terms(params: PolicyParams, states, actions) -> PolicyTerms:
    """Evaluate log pi(a|s) and entropy for a batch, ready for backprop."""
    out, acts = mlp_forward(params, states)
    B = out.shape[0]
    if params.arch.head == "categorical":
        a = np.asarray(actions, dtype=np.int64).reshape(-1)
        if a.shape != (B,) or a.min(initial=0) < 0 or a.max(initial=0) >= params.arch.out_dim:
            raise UsageError("actions must be integer indices within the action set, one per state")
        z = out - out.max(axis=1, keepdims=True)
        logp_all = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        pi = np.exp(logp_all)
        logp = logp_all[np.arange(B), a]
        ent = -(pi * logp_all).sum(axis=1)
        dlogp = -pi.copy()
        dlogp[np.arange(B), a] += 1.0
        dent = -pi * (logp_all + ent[:, None])
        return PolicyTerms(logp, ent, params, acts, dlogp, dent)
    if params.arch.head == "gaussian":
        a = np.asarray(actions, dtype=np.float64).reshape(B, -1)
        if a.shape[1] != params.arch.out_dim:
            raise UsageError("action dimension does not match the gaussian head")
        log_std = params.log_std
        inv_var = np.exp(-2.0 * log_std)
        diff = a - out
        zz = diff * diff * inv_var
        logp = (-0.5 * zz - log_std - 0.5 * math.log(2.0 * math.pi)).sum(axis=1)
        ent = np.full(B, float(np.sum(log_std + 0.5 * (math.log(2.0 * math.pi) + 1.0))))
        return PolicyTerms(
            logp, ent, params, acts, diff * inv_var, np.zeros_like(out), zz - 1.0
        )
    raise UsageError("value networks do not define log-likelihoods")


def clamp_log_std(params: PolicyParams, flat: np.ndarray) -> np.ndarray:
    if params.arch.head == "gaussian":
        d = params.arch.out_dim
        flat = flat.copy()
        flat[-d:] = np.clip(flat[-d:], LOG_STD_MIN, LOG_STD_MAX)
    return flat


# ---------------------------------------------------------------- optimizer


@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(params: PolicyParams, grad: np.ndarray, state: AdamState, lr: float,
              max_grad_norm: float | None = None) -> tuple[PolicyParams, AdamState]:
    """One descent step on ``grad`` (minimization)."""
    if not np.all(np.isfinite(grad)):
        raise TrainingError("non-finite gradient")
    if max_grad_norm is not None:
        norm = float(np.sqrt(np.dot(grad, grad)))
        if norm > max_grad_norm:
            grad = grad * (max_grad_norm / (norm + 1e-12))
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    flat = params.flat - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    flat = clamp_log_std(params, flat)
    return PolicyParams(params.arch, flat), AdamState(m, v, t)


# ---------------------------------------------------------------- behavioral cloning


@dataclass(frozen=True)
class BcBatch:
    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        a = np.asarray(self.actions)
        if s.shape[0] == 0:
            raise UsageError("behavioral-cloning batch is empty")
        if a.shape[0] != s.shape[0]:
            raise UsageError(f"{s.shape[0]} states but {a.shape[0]} actions")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)


def nll_and_grad(params: PolicyParams, batch: BcBatch) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood (nats) and its gradient."""
    terms = policy_terms(params, batch.states, batch.actions)
    n = terms.logp.size
    loss = -float(np.mean(terms.logp))
    return loss, terms.backward(np.full(n, -1.0 / n))


def bc_update(params: PolicyParams, batch: BcBatch, opt_state: AdamState | None, lr: float,
              steps: int = 1) -> tuple[PolicyParams, AdamState, list[float]]:
    """Full-batch Adam steps on the mean NLL; returns the loss before each step."""
    if opt_state is None:
        opt_state = AdamState.zeros(params.arch.n_params)
    losses = []
    for _ in range(steps):
        loss, grad = nll_and_grad(params, batch)
        if not math.isfinite(loss):
            raise TrainingError(f"behavioral-cloning loss is {loss} on a batch of {len(batch.actions)}")
        losses.append(loss)
        params, opt_state = adam_step(params, grad, opt_state, lr)
    return params, opt_state, losses


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def nll_grad_check(params: PolicyParams, batch: BcBatch, h: float = 1e-5) -> float:
    """Max relative error between the analytic NLL gradient and central differences."""
    if params.arch.n_params > 200:
        raise UsageError(f"gradient check is limited to 200 parameters, got {params.arch.n_params}")
    _, analytic = nll_and_grad(params, batch)

    def f(x):
        return nll_and_grad(PolicyParams(params.arch, x), batch)[0]

    return relative_error(analytic, finite_difference_grad(f, params.flat.copy(), h))


# ---------------------------------------------------------------- digest / checkpoint

CHECKPOINT_MAGIC = b"RRLP"
CHECKPOINT_VERSION = 1
_HEAD_CODES = {h: i for i, h in enumerate(HEADS)}


def canonical_bytes(params: PolicyParams) -> bytes:
    return params.flat.astype("<f8").tobytes()


def params_digest(params: PolicyParams) -> int:
    """64-bit BLAKE2b of the little-endian float64 parameter vector."""
    return int.from_bytes(hashlib.blake2b(canonical_bytes(params), digest_size=8).digest(), "little")


def save_checkpoint(params: PolicyParams) -> bytes:
    """Serialize as ``magic, u16 version, u8 head, u8 n_hidden, u32 obs_dim,
    u32 out_dim, u32 hidden[n_hidden], f64 out_scale, f64 init_log_std,
    u64 n_params, f64 params[n_params]`` (all little-endian)."""
    a = params.arch
    header = struct.pack("<4sHBBII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, _HEAD_CODES[a.head],
                         len(a.hidden), a.obs_dim, a.out_dim)
    header += struct.pack(f"<{len(a.hidden)}I", *a.hidden)
    header += struct.pack("<ddQ", a.out_scale, a.init_log_std, a.n_params)
    return header + canonical_bytes(params)


def load_checkpoint(raw: bytes) -> PolicyParams:
    fixed = struct.calcsize("<4sHBBII")
    if len(raw) < fixed:
        raise DecodeError("checkpoint truncated in header")
    magic, version, head, n_hidden, obs_dim, out_dim = struct.unpack_from("<4sHBBII", raw)
    if magic != CHECKPOINT_MAGIC:
        raise DecodeError("not a policy checkpoint")
    if version != CHECKPOINT_VERSION:
        raise DecodeError(f"unsupported checkpoint version {version}")
    pos = fixed
    hidden = struct.unpack_from(f"<{n_hidden}I", raw, pos)
    pos += 4 * n_hidden
    out_scale, init_log_std, n = struct.unpack_from("<ddQ", raw, pos)
    pos += struct.calcsize("<ddQ")
    arch = Arch(obs_dim, out_dim, HEADS[head], tuple(hidden), out_scale, init_log_std)
    if n != arch.n_params or len(raw) != pos + 8 * n:
        raise DecodeError("checkpoint parameter count does not match its architecture")
    return PolicyParams(arch, np.frombuffer(raw, dtype="<f8", offset=pos, count=n).astype(np.float64))


def joint_nll(params_list: Sequence[PolicyParams], states_list, actions_list) -> float:
    """Mean NLL of a factorized multi-actor policy: the sum of per-actor terms."""
    return sum(nll_and_grad(p, BcBatch(s, a))[0] for p, s, a in zip(params_list, states_list, actions_list))
