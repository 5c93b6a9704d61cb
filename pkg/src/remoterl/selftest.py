"""Quick property checks of the codecs and gradients, runnable without pytest."""

from __future__ import annotations

import struct
from typing import Callable

import numpy as np

from . import dist, prng
from .codec import (OrcConfig, RewardScheme, elias_delta_decode, elias_delta_encode,
                    elias_delta_length, reward_decode, reward_encode)
from .codec.orc import orc_encode, orc_encode_batch
from .policy import Arch, BcBatch, init_params, nll_grad_check
from .protocol.messages import MsgType, WireMessage, frame_decode, frame_encode


def _elias() -> str:
    for n in range(1, 5000):
        b = elias_delta_encode(n)
        assert len(b) == elias_delta_length(n)
        assert elias_delta_decode(b + "1") == (n, len(b))
    return "1..4999 round trip"


def _frames() -> str:
    rng = np.random.default_rng(0)
    for _ in range(500):
        bits = "".join(rng.choice(["0", "1"], size=int(rng.integers(0, 80))))
        m = WireMessage.from_bits(MsgType(int(rng.integers(0, 5))), int(rng.integers(0, 1 << 16)),
                                  int(rng.integers(0, 1 << 32)), bits)
        d = frame_decode(frame_encode(m))
        assert (d.msg_type, d.actor_id, d.step, d.payload) == (m.msg_type, m.actor_id, m.step, m.payload)
        assert d.bits.startswith(bits)
    return "500 random frames"


def _rewards() -> str:
    rng = np.random.default_rng(1)
    xs = rng.normal(scale=100.0, size=2000).astype(np.float32).astype(np.float64)
    for x in xs:
        assert reward_decode(reward_encode(x, RewardScheme.FR), RewardScheme.FR) == x
        want = struct.unpack("<e", struct.pack("<e", x))[0]
        assert reward_decode(reward_encode(x, RewardScheme.QR16), RewardScheme.QR16) == want
    for rs in (RewardScheme.QR8, RewardScheme.QR4):
        step = 2.0 / (1 << rs.bits)
        for x in rng.uniform(-1, 1, size=2000):
            assert abs(reward_decode(reward_encode(x, rs, (-1, 1)), rs, (-1, 1)) - x) <= step / 2 + 1e-12
    return "FR exact, QR16 = binary16, QR8/QR4 within half a level"


def _orc() -> str:
    P = dist.Categorical([0.6, 0.2, 0.15, 0.05])
    Q = dist.Categorical([0.25, 0.25, 0.25, 0.25])
    cfg = OrcConfig(256)
    _, msg = orc_encode(Q, Q, cfg, prng.StreamKey(7))
    assert msg.index == 1 and msg.wire_bits == 1
    keys = [prng.StreamKey(11, step=k) for k in range(20000)]
    acts, _ = orc_encode_batch(P, Q, cfg, keys)
    tv = 0.5 * np.abs(np.bincount(acts, minlength=4) / len(keys) - P.probs).sum()
    assert tv <= 0.03, tv
    return f"P=Q gives index 1; TV={tv:.4f} over 20000 keys"


def _gradients() -> str:
    rng = np.random.default_rng(2)
    worst = 0.0
    for head, out in (("categorical", 3), ("gaussian", 2)):
        arch = Arch(3, out, head, hidden=(5,), out_scale=1.0)
        p = init_params(5, arch)
        s = rng.normal(size=(16, 3))
        a = rng.integers(0, out, 16) if head == "categorical" else rng.normal(size=(16, out))
        worst = max(worst, nll_grad_check(p, BcBatch(s, a)))
    assert worst <= 1e-4, worst
    return f"max relative error {worst:.2e}"


def _kl() -> str:
    p = dist.Categorical([0.5, 0.3, 0.2])
    q = dist.Categorical([0.2, 0.2, 0.6])
    cross = -float(np.sum(p.probs * q.log_probs)) / dist.LN2
    assert abs(dist.kl(p, q) - (cross - dist.entropy(p))) <= 1e-9
    assert dist.kl(p, p) == 0.0
    return "D(p||q) = H(p,q) - H(p); D(p||p) = 0"


CHECKS: dict[str, Callable[[], str]] = {
    "elias-delta": _elias,
    "frames": _frames,
    "reward codecs": _rewards,
    "ordered random coding": _orc,
    "nll gradient": _gradients,
    "kl identities": _kl,
}


def run_selftest(out=print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        try:
            detail = fn()
            out(f"PASS  {name}: {detail}")
        except AssertionError as exc:
            ok = False
            out(f"FAIL  {name}: {exc}")
    return ok
