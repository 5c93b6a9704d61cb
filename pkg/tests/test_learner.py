import math

import numpy as np
import pytest

from remoterl import dist, prng
from remoterl.errors import TrainingError, UsageError
from remoterl.learner import (
    LearnerConfig, LearnerState, Trajectory, compute_returns_and_advantages, joint_log_prob,
    policy_gradient, ppo_surrogate, rl_update,
)
from remoterl.policy import Arch, PolicyParams, forward, init_params, zero_params

BANDIT = Arch(1, 2, "categorical", hidden=(4,))
VALUE = Arch(1, 1, "value", hidden=(4,), out_scale=1.0)


def _gae_oracle(r, d, v, last, gamma, lam):
    """Direct sum over the episode of (gamma lam)^k delta_{t+k}."""
    T = len(r)
    nv = [0.0 if d[t] else (last if t == T - 1 else v[t + 1]) for t in range(T)]
    delta = [r[t] + gamma * nv[t] - v[t] for t in range(T)]
    out = []
    for t in range(T):
        s, k = 0.0, 0
        while True:
            s += (gamma * lam) ** k * delta[t + k]
            if d[t + k] or t + k == T - 1:
                break
            k += 1
        out.append(s)
    return np.array(out)


def test_returns_geometric_example():
    ret, _ = compute_returns_and_advantages([1, 1, 1], [0, 0, 1], np.zeros(3), 0.0, 0.5, 1.0)
    assert np.allclose(ret, [1.75, 1.5, 1.0], atol=1e-15)


def test_gamma_zero_returns_reward():
    r = np.array([0.3, -1.0, 2.0, 0.5])
    ret, _ = compute_returns_and_advantages(r, [0, 1, 0, 0], np.zeros(4), 5.0, 0.0, 0.95)
    assert np.array_equal(ret, r)


def test_gae_matches_direct_sum_and_is_normalized():
    rng = np.random.default_rng(0)
    for _ in range(20):
        T = int(rng.integers(2, 40))
        r, v = rng.normal(size=T), rng.normal(size=T)
        d = rng.random(T) < 0.15
        last = float(rng.normal())
        gamma, lam = float(rng.uniform(0, 0.999)), float(rng.uniform(0, 1))
        ret, adv = compute_returns_and_advantages(r, d, v, last, gamma, lam, normalize=False)
        want = _gae_oracle(r, d, v, last, gamma, lam)
        assert np.allclose(adv, want, atol=1e-12)
        assert np.allclose(ret, want + v, atol=1e-12)
        _, nadv = compute_returns_and_advantages(r, d, v, last, gamma, lam)
        assert abs(nadv.mean()) < 1e-9 and abs(nadv.std() - 1) < 1e-6


def test_no_bootstrap_across_done():
    v = np.array([0.0, 0.0, 100.0])
    ret, _ = compute_returns_and_advantages([1.0, 1.0, 0.0], [0, 1, 0], v, 0.0, 0.9, 1.0, normalize=False)
    assert ret[1] == 1.0 and ret[0] == pytest.approx(1.9)


def test_ppo_clip_branches():
    # ratio 2, positive advantage: the clipped branch is active and flat
    _, g = ppo_surrogate(np.array([math.log(2.0)]), np.array([0.0]), np.array([1.0]), 0.2)
    assert g[0] == 0.0
    # ratio 0.5, positive advantage: unclipped branch, d/dlogp of -A*ratio
    _, g = ppo_surrogate(np.array([math.log(0.5)]), np.array([0.0]), np.array([1.0]), 0.2)
    assert g[0] == pytest.approx(-0.5)
    # ratio 0.5, negative advantage: clipped at 0.8, flat
    _, g = ppo_surrogate(np.array([math.log(0.5)]), np.array([0.0]), np.array([-1.0]), 0.2)
    assert g[0] == 0.0


def test_ppo_surrogate_gradient_fd():
    rng = np.random.default_rng(1)
    lo = rng.normal(size=50) * 0.3
    ln = lo + rng.normal(size=50) * 0.3
    adv = rng.normal(size=50)
    _, g = ppo_surrogate(ln, lo, adv, 0.2)
    h = 1e-6
    for i in range(50):
        e = np.zeros(50)
        e[i] = h
        fd = (ppo_surrogate(ln + e, lo, adv, 0.2)[0] - ppo_surrogate(ln - e, lo, adv, 0.2)[0]) / (2 * h)
        ratio = math.exp(ln[i] - lo[i])
        if abs(ratio - 0.8) > 1e-4 and abs(ratio - 1.2) > 1e-4:
            assert g[i] == pytest.approx(fd, abs=1e-7)


def test_reinforce_gradient_matches_exact_enumeration():
    rng = np.random.default_rng(2)
    p = PolicyParams(BANDIT, rng.normal(size=BANDIT.n_params))
    reward = np.array([1.0, 0.0])
    s = np.zeros((1, 1))

    def J(flat):
        pi = forward(PolicyParams(BANDIT, flat), s[0]).probs
        return float(pi @ reward)

    pi = forward(p, s[0]).probs
    # exact expectation: sum_a pi(a) r(a) grad log pi(a)
    (g,) = policy_gradient([p], [np.zeros((2, 1))], [np.array([0, 1])], pi * reward)
    h = 1e-6
    fd = np.array([(J(p.flat + h * e) - J(p.flat - h * e)) / (2 * h) for e in np.eye(p.flat.size)])
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) <= 1e-3


def _bandit_traj(policy, key, n):
    acts = dist.sample_array(forward(policy, [0.0]), key, np.arange(n))
    return Trajectory(obs=[np.zeros((n, 1))], actions=[acts], global_obs=np.zeros((n, 1)),
                      rewards=(acts == 0).astype(float), dones=np.ones(n, bool),
                      next_global_obs=np.zeros(1))


@pytest.mark.parametrize("algorithm", ["REINFORCE", "PPO"])
def test_two_armed_bandit_converges(algorithm):
    cfg = LearnerConfig(algorithm=algorithm, lr=0.05, ent_coef=0.0)
    st = LearnerState.fresh([init_params(0, BANDIT)], init_params(0, VALUE))
    for k in range(200):
        key = prng.StreamKey(3, episode=k)
        st = rl_update(st, _bandit_traj(st.policies[0], key.with_(purpose=prng.Purpose.ACTION_SAMPLE), 32),
                       cfg, key)
        if forward(st.policies[0], [0.0]).probs[0] >= 0.95:
            break
    assert forward(st.policies[0], [0.0]).probs[0] >= 0.95


@pytest.mark.parametrize("per_actor", [False, True])
def test_three_actor_shared_reward_bandit(per_actor):
    """Three Gaussian actors, one summed reward: each must find its own target."""
    arch = Arch(1, 2, "gaussian", hidden=(8,), init_log_std=-0.5)
    st = LearnerState.fresh([init_params(0, arch, stream=i) for i in range(3)],
                            init_params(0, Arch(1, 1, "value", hidden=(8,), out_scale=1.0), stream=1000))
    cfg = LearnerConfig(ent_coef=0.0, per_actor_ratio=per_actor)
    targets = np.array([[0.5, 0.5], [-0.5, 0.2], [0.1, -0.7]])
    n = 256
    for k in range(100):
        acts = [dist.sample_array(forward(p, [0.0]), prng.StreamKey(1, episode=k, actor_id=i), np.arange(n))
                for i, p in enumerate(st.policies)]
        r = -sum(np.linalg.norm(a - t, axis=1) for a, t in zip(acts, targets))
        traj = Trajectory([np.zeros((n, 1))] * 3, acts, np.zeros((n, 1)), r, np.ones(n, bool), np.zeros(1))
        st = rl_update(st, traj, cfg, prng.StreamKey(2, episode=k))
    means = np.array([forward(p, [0.0]).mean for p in st.policies])
    assert np.abs(means - targets).max() < 0.05


def test_per_actor_ratio_is_joint_for_one_actor():
    st = LearnerState.fresh([init_params(0, BANDIT)], init_params(0, VALUE))
    key = prng.StreamKey(3, episode=0)
    traj = _bandit_traj(st.policies[0], key.with_(purpose=prng.Purpose.ACTION_SAMPLE), 64)
    a = rl_update(st, traj, LearnerConfig(lr=0.05), key)
    b = rl_update(st, traj, LearnerConfig(lr=0.05, per_actor_ratio=True), key)
    assert np.array_equal(a.policies[0].flat, b.policies[0].flat)


def test_zero_advantage_leaves_policy_unchanged():
    pol = init_params(4, BANDIT)
    st = LearnerState.fresh([pol], zero_params(VALUE))
    traj = Trajectory([np.zeros((8, 1))], [np.array([0, 1] * 4)], np.zeros((8, 1)), np.zeros(8),
                      np.ones(8, bool), np.zeros(1))
    new = rl_update(st, traj, LearnerConfig(algorithm="REINFORCE", ent_coef=0.0), prng.StreamKey(0))
    assert np.array_equal(new.policies[0].flat, pol.flat)


def _multi_traj(rng, n=64):
    obs = [rng.normal(size=(n, 3)) for _ in range(2)]
    acts = [rng.normal(size=(n, 2)) for _ in range(2)]
    return Trajectory(obs, acts, rng.normal(size=(n, 6)), rng.normal(size=n), rng.random(n) < 0.1,
                      rng.normal(size=6))


def _multi_state():
    arch = Arch(3, 2, "gaussian", hidden=(8,))
    return LearnerState.fresh([init_params(0, arch, stream=i) for i in range(2)],
                              init_params(0, Arch(6, 1, "value", hidden=(8,), out_scale=1.0), stream=1000))


def test_update_deterministic_and_key_driven():
    traj = _multi_traj(np.random.default_rng(5))
    cfg = LearnerConfig()
    a = rl_update(_multi_state(), traj, cfg, prng.StreamKey(1, episode=3))
    b = rl_update(_multi_state(), traj, cfg, prng.StreamKey(1, episode=3))
    c = rl_update(_multi_state(), traj, cfg, prng.StreamKey(1, episode=4))
    assert [p.digest() for p in a.policies] == [p.digest() for p in b.policies]
    assert a.value.digest() == b.value.digest()
    assert [p.digest() for p in a.policies] != [p.digest() for p in c.policies]


def test_joint_log_prob_adds_actors():
    traj = _multi_traj(np.random.default_rng(6))
    st = _multi_state()
    lp = joint_log_prob(st.policies, traj.obs, traj.actions)
    single = [joint_log_prob([p], [o], [a]) for p, o, a in zip(st.policies, traj.obs, traj.actions)]
    assert np.allclose(lp, single[0] + single[1], atol=1e-12)


def test_reward_scale_only_rescales_value_targets():
    traj = _multi_traj(np.random.default_rng(7))
    a = rl_update(_multi_state(), traj, LearnerConfig(reward_scale=2.0), prng.StreamKey(0))
    doubled = Trajectory(traj.obs, traj.actions, traj.global_obs, traj.rewards * 2.0, traj.dones,
                         traj.next_global_obs)
    b = rl_update(_multi_state(), doubled, LearnerConfig(), prng.StreamKey(0))
    assert a.value.digest() == b.value.digest()


def test_errors():
    st = _multi_state()
    traj = _multi_traj(np.random.default_rng(8))
    with pytest.raises(UsageError):
        rl_update(st, Trajectory(traj.obs, traj.actions, traj.global_obs[:0], traj.rewards[:0],
                                 traj.dones[:0], traj.next_global_obs), LearnerConfig(), prng.StreamKey(0))
    with pytest.raises(UsageError):
        Trajectory(traj.obs, traj.actions, traj.global_obs, np.full(64, np.nan), traj.dones,
                   traj.next_global_obs)
    bad = LearnerState(st.policies, PolicyParams(st.value.arch, np.full(st.value.arch.n_params, np.nan)),
                       st.policy_opt, st.value_opt)
    with pytest.raises(TrainingError):
        rl_update(bad, traj, LearnerConfig(), prng.StreamKey(0))
    for kw in ({"gamma": 1.0}, {"clip_coef": 0.0}, {"algorithm": "DQN"}, {"update_epochs": 0},
               {"reward_scale": 0.0}):
        with pytest.raises(UsageError):
            LearnerConfig(**kw)
