import hashlib
import math

import numpy as np
import pytest

from remoterl import dist
from remoterl.errors import DecodeError, TrainingError, UsageError
from remoterl.policy import (
    LOG_STD_MAX, LOG_STD_MIN, AdamState, Arch, BcBatch, PolicyParams, adam_step, bc_update,
    forward, init_params, joint_nll, load_checkpoint, mlp_forward, nll_and_grad, nll_grad_check,
    params_digest, policy_terms, save_checkpoint, zero_params,
)

CAT = Arch(4, 3, "categorical", hidden=(8, 8))
GAU = Arch(4, 2, "gaussian", hidden=(8,), init_log_std=-0.3)


def test_init_deterministic_and_seed_sensitive():
    a, b = init_params(7, CAT), init_params(7, CAT)
    assert np.array_equal(a.flat, b.flat)
    assert not np.array_equal(a.flat, init_params(8, CAT).flat)
    assert not np.array_equal(a.flat, init_params(7, CAT, stream=1).flat)


def test_init_layout():
    p = init_params(1, GAU)
    (w1, b1), (w2, b2) = p.layers()
    assert w1.shape == (4, 8) and w2.shape == (8, 2)
    assert np.all(np.abs(w1) <= 1 / math.sqrt(4)) and np.all(b1 == 0)
    assert np.all(np.abs(w2) <= 0.01 / math.sqrt(8))
    assert np.array_equal(p.log_std, [-0.3, -0.3])


def test_mirror_and_clone_start_equal():
    P = forward(init_params(3, CAT), np.ones(4))
    Q = forward(init_params(3, CAT), np.ones(4))
    assert dist.kl(P, Q) == 0.0


def test_zero_network_outputs():
    d = forward(zero_params(Arch(2, 3, "categorical")), [0.3, -0.2])
    assert np.allclose(d.probs, 1 / 3, atol=1e-15)
    g = forward(zero_params(Arch(2, 2, "gaussian")), [0.3, -0.2])
    assert np.array_equal(g.mean, [0, 0]) and np.array_equal(g.std, [1, 1])


def test_forward_dimension_check():
    with pytest.raises(UsageError):
        forward(init_params(0, CAT), np.ones(5))
    with pytest.raises(UsageError):
        forward(init_params(0, Arch(4, 1, "value")), np.ones(4))


def test_forward_respects_distribution_invariants():
    rng = np.random.default_rng(0)
    big = PolicyParams(CAT, rng.normal(size=CAT.n_params) * 50)
    for _ in range(20):
        d = forward(big, rng.normal(size=4))
        assert d.probs.min() >= dist.EPS_FLOOR and abs(d.probs.sum() - 1) <= 1e-9


def _small_batch(arch, rng, n=12):
    s = rng.normal(size=(n, arch.obs_dim))
    if arch.head == "categorical":
        return BcBatch(s, rng.integers(0, arch.out_dim, n))
    return BcBatch(s, rng.normal(size=(n, arch.out_dim)))


@pytest.mark.parametrize("arch", [Arch(3, 3, "categorical", hidden=(6,), out_scale=1.0),
                                  Arch(3, 2, "gaussian", hidden=(5, 4), out_scale=1.0, init_log_std=0.2)])
def test_gradient_check(arch):
    rng = np.random.default_rng(1)
    p = init_params(2, arch)
    assert p.arch.n_params <= 200
    assert nll_grad_check(p, _small_batch(arch, rng)) <= 1e-4


def test_gradient_check_rejects_large_networks():
    with pytest.raises(UsageError):
        nll_grad_check(init_params(0, Arch(4, 4)), BcBatch(np.zeros((1, 4)), [0]))


def test_gradients_match_autograd():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(2)
    for arch in (CAT, GAU):
        p = init_params(4, arch).flat.copy()
        p += rng.normal(size=p.size) * 0.3
        params = PolicyParams(arch, p)
        batch = _small_batch(arch, rng, 20)
        loss, grad = nll_and_grad(params, batch)
        t = torch.tensor(p, dtype=torch.float64, requires_grad=True)
        X = torch.tensor(batch.states)
        pos, h = 0, X
        sizes = arch.layer_sizes
        for li, (i, o) in enumerate(sizes):
            W = t[pos:pos + i * o].reshape(i, o)
            pos += i * o
            b = t[pos:pos + o]
            pos += o
            h = h @ W + b
            if li < len(sizes) - 1:
                h = torch.tanh(h)
        if arch.head == "categorical":
            ll = torch.log_softmax(h, dim=1)[torch.arange(20), torch.tensor(batch.actions)]
        else:
            ls = t[pos:]
            a = torch.tensor(batch.actions)
            ll = torch.distributions.Normal(h, torch.exp(ls)).log_prob(a).sum(dim=1)
        ref = -ll.mean()
        ref.backward()
        assert loss == pytest.approx(ref.item(), abs=1e-12)
        assert np.allclose(grad, t.grad.numpy(), atol=1e-12, rtol=1e-10)


def test_zero_gradient_at_softmax_optimum():
    arch = Arch(1, 3, "categorical", hidden=(2,))
    freq = np.array([0.5, 0.3, 0.2])
    flat = np.zeros(arch.n_params)
    flat[-3:] = np.log(freq)          # output bias; output weights stay zero
    p = PolicyParams(arch, flat)
    batch = BcBatch(np.zeros((10, 1)), [0] * 5 + [1] * 3 + [2] * 2)
    _, g = nll_and_grad(p, batch)
    assert np.max(np.abs(g)) <= 1e-12


def test_adam_matches_torch():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(3)
    arch = Arch(2, 2, hidden=(3,))
    x0 = rng.normal(size=arch.n_params)
    p, st = PolicyParams(arch, x0), AdamState.zeros(arch.n_params)
    t = torch.tensor(x0, requires_grad=True)
    opt = torch.optim.Adam([t], lr=0.01)
    for _ in range(5):
        g = rng.normal(size=arch.n_params)
        p, st = adam_step(p, g, st, 0.01)
        opt.zero_grad()
        t.grad = torch.tensor(g)
        opt.step()
    assert np.allclose(p.flat, t.detach().numpy(), atol=1e-12)


def test_adam_rejects_nonfinite_and_clips_norm():
    arch = Arch(2, 2, hidden=(3,))
    p, st = init_params(0, arch), AdamState.zeros(arch.n_params)
    with pytest.raises(TrainingError):
        adam_step(p, np.full(arch.n_params, np.nan), st, 0.01)
    # the first Adam step moves every coordinate by about lr regardless of scale
    q, _ = adam_step(p, np.full(arch.n_params, 1e6), st, 0.01, max_grad_norm=0.5)
    assert np.allclose(p.flat - q.flat, 0.01, atol=1e-6)


def test_log_std_clamped_by_updates():
    arch = Arch(2, 1, "gaussian", hidden=(2,))
    p, st = init_params(0, arch), AdamState.zeros(arch.n_params)
    g = np.zeros(arch.n_params)
    g[-1] = 1.0
    for _ in range(100):
        p, st = adam_step(p, g, st, 1.0)
    assert p.log_std[0] == LOG_STD_MIN
    for _ in range(100):
        p, st = adam_step(p, -g, st, 1.0)
    assert p.log_std[0] <= LOG_STD_MAX


def test_bc_converged_loss_non_increasing():
    rng = np.random.default_rng(4)
    pol = init_params(5, CAT)
    s = rng.normal(size=(64, 4))
    out, _ = mlp_forward(pol, s)
    batch = BcBatch(s, out.argmax(axis=1))
    p, opt, _ = bc_update(pol, batch, None, 0.01, steps=300)
    _, _, losses = bc_update(p, batch, opt, 0.01, steps=10)
    assert all(b <= a + 1e-6 for a, b in zip(losses, losses[1:]))


def test_bc_overfits_single_pair():
    p, _, _ = bc_update(init_params(0, CAT), BcBatch(np.ones((1, 4)), [2]), None, 0.01, steps=500)
    assert forward(p, np.ones(4)).probs[2] >= 0.99


def test_bc_cross_entropy_consistency():
    target = dist.Categorical([0.6, 0.3, 0.1])
    from remoterl.prng import StreamKey
    acts = dist.sample_array(target, StreamKey(6), np.arange(4000))
    batch = BcBatch(np.zeros((4000, 4)), acts)
    p, _, _ = bc_update(init_params(1, CAT), batch, None, 0.01, steps=2000)
    assert dist.kl(target, forward(p, np.zeros(4))) < 0.05


def test_bc_replicas_bit_identical():
    rng = np.random.default_rng(7)
    batch = _small_batch(GAU, rng, 30)
    a = bc_update(init_params(9, GAU), batch, None, 3e-3, steps=7)
    b = bc_update(init_params(9, GAU), batch, None, 3e-3, steps=7)
    assert a[0].digest() == b[0].digest() and np.array_equal(a[1].m, b[1].m)


def test_bc_batch_validation():
    with pytest.raises(UsageError):
        BcBatch(np.zeros((0, 4)), np.zeros(0))
    with pytest.raises(UsageError):
        BcBatch(np.zeros((3, 4)), [0, 1])
    with pytest.raises(UsageError):
        policy_terms(init_params(0, CAT), np.zeros((2, 4)), [0, 3])


@pytest.mark.filterwarnings("ignore:invalid value encountered:RuntimeWarning")
def test_bc_nan_loss_raises():
    bad = PolicyParams(GAU, np.full(GAU.n_params, np.inf))
    with pytest.raises((TrainingError, ValueError)):
        bc_update(bad, BcBatch(np.zeros((2, 4)), np.zeros((2, 2))), None, 0.01)


def test_digest_is_blake2b_of_little_endian_floats():
    p = init_params(3, GAU)
    raw = b"".join(np.float64(x).newbyteorder("<").tobytes() if False else np.array([x], "<f8").tobytes()
                   for x in p.flat)
    want = int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(), "little")
    assert params_digest(p) == want == p.digest()


def test_checkpoint_round_trip_and_errors():
    for arch in (CAT, GAU, Arch(12, 1, "value", hidden=(5, 6, 7), out_scale=1.0)):
        p = init_params(11, arch)
        raw = save_checkpoint(p)
        q = load_checkpoint(raw)
        assert q.arch == p.arch and np.array_equal(q.flat, p.flat)
        assert raw[:4] == b"RRLP"
    with pytest.raises(DecodeError):
        load_checkpoint(b"XXXX" + raw[4:])
    with pytest.raises(DecodeError):
        load_checkpoint(raw[:-3])
    with pytest.raises(DecodeError):
        load_checkpoint(raw[:5])


def test_joint_nll_sums_actors():
    rng = np.random.default_rng(8)
    ps = [init_params(s, CAT) for s in range(3)]
    batches = [_small_batch(CAT, rng) for _ in range(3)]
    total = joint_nll(ps, [b.states for b in batches], [b.actions for b in batches])
    assert total == pytest.approx(sum(nll_and_grad(p, b)[0] for p, b in zip(ps, batches)), abs=1e-12)
