import itertools
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from remoterl import envs, prng
from remoterl.envs import DOWN, LEFT, UP, GridState, GridWorld, NavState, PointNav, SpreadLite
from remoterl.errors import UsageError

KEY = prng.StreamKey(0, purpose=prng.Purpose.ENV_NOISE)


def _bfs_return(env: GridWorld, state: GridState) -> float:
    """Best undiscounted return by breadth-first search over the step function."""
    seen = {state.pos}
    q = deque([(state, 0.0)])
    while q:
        s, ret = q.popleft()
        for a in range(4):
            r = env.step(s, a)
            if r.reward == 1.0:
                return ret + r.reward
            if r.state.pos not in seen and not r.done:
                seen.add(r.state.pos)
                q.append((r.state, ret + r.reward))
    raise AssertionError("goal unreachable")


def test_gridworld_goal_and_wall():
    env = GridWorld()
    r = env.step(GridState((3, 3), (3, 4)), UP)
    assert r.reward == 1.0 and r.done
    r = env.step(GridState((0, 0), (5, 5)), LEFT)
    assert r.state.pos == (0, 0) and r.reward == pytest.approx(-0.01, abs=1e-8) and not r.done
    r = env.step(GridState((0, 0), (5, 5)), DOWN)
    assert r.state.pos == (0, 0)


def test_gridworld_corner_to_corner():
    env = GridWorld()
    s = GridState((0, 0), (7, 7))
    # 14 moves; the goal step pays +1 in place of the step cost
    assert _bfs_return(env, s) == pytest.approx(env.optimal_return(s), abs=1e-6)
    assert env.optimal_return(s) == pytest.approx(1 + 13 * env.STEP_REWARD)


def test_gridworld_optimal_return_matches_bfs():
    env = GridWorld()
    for p, g in itertools.islice(itertools.permutations(itertools.product(range(8), repeat=2), 2), 0, None, 97):
        assert env.optimal_return(GridState(p, g)) == pytest.approx(_bfs_return(env, GridState(p, g)), abs=1e-6)


def test_gridworld_episode_cap():
    env = GridWorld()
    s = GridState((0, 0), (7, 7))
    for t in range(64):
        r = env.step(s, LEFT)
        s = r.state
    assert r.done and s.t == 64


def test_gridworld_reset_distribution():
    env = GridWorld()
    starts = [env.reset(KEY.with_(episode=e)) for e in range(3000)]
    assert all(s.pos != s.goal for s in starts)
    goals = np.array([g.goal[0] + 8 * g.goal[1] for g in starts])
    counts = np.bincount(goals, minlength=64)
    assert counts.min() > 15 and counts.max() < 85


def test_gridworld_observation():
    obs = GridWorld().observe(GridState((0, 7), (7, 0)))
    assert np.array_equal(obs, [-1, 1, 1, -1])


def test_pointnav_examples():
    env = PointNav()
    r = env.step(NavState(np.zeros(2), np.array([1.0, 0.0])), [1.0, 0.0])
    assert r.reward == pytest.approx(-0.9, abs=1e-7)
    clipped = env.step(NavState(np.zeros(2), np.array([1.0, 0.0])), [5.0, 0.0])
    assert np.array_equal(clipped.state.pos, r.state.pos) and clipped.reward == r.reward
    at = env.step(NavState(np.array([0.25, 0.5]), np.array([0.25, 0.5])), [0.0, 0.0])
    assert at.reward == 0.0


def test_pointnav_rewards_are_binary32_and_bounded():
    env = PointNav()
    s = env.reset(KEY)
    for t in range(64):
        a = env.random_action(prng.StreamKey(1, step=t))
        r = env.step(s, a)
        assert float(np.float32(r.reward)) == r.reward
        assert -math.sqrt(8) <= r.reward <= 0
        s = r.state
    assert r.done


def test_spread_geometry():
    land = np.array([[0.0, 0.0], [0.5, 0.5], [-0.5, 0.5]])
    assert envs.spread_reward(land.copy(), land) == 0.0
    # one agent midway between two landmarks at distance d from each
    d = 0.3
    agents = np.array([[0.0, 0.0]])
    two = np.array([[d, 0.0], [-d, 0.0]])
    assert envs.spread_reward(agents, two) == pytest.approx(-2 * d)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=12, max_size=12), st.permutations(range(3)))
def test_spread_permutation_symmetry(xs, perm):
    pts = np.array(xs).reshape(6, 2)
    agents, land = pts[:3], pts[3:]
    assert envs.spread_reward(agents[list(perm)], land) == envs.spread_reward(agents, land)


def test_spreadlite_step_and_observation():
    env = SpreadLite()
    s = env.reset(KEY)
    assert env.observe(s, 1).shape == (env.spec.obs_dim,)
    assert np.array_equal(env.observe(s, 1)[:2], s.agents[1])
    assert env.global_observation(s).shape == (env.spec.global_obs_dim,)
    with pytest.raises(UsageError):
        env.step(s, [np.zeros(2)] * 2)
    for t in range(32):
        r = env.step(s, [np.zeros(2)] * 3)
        assert r.reward <= 0
        s = r.state
    assert r.done


@pytest.mark.parametrize("name", sorted(envs.REGISTRY))
def test_determinism(name):
    env = envs.make(name)

    def rollout():
        s = env.reset(KEY.with_(episode=5))
        out = []
        for t in range(20):
            acts = [env.random_action(prng.StreamKey(2, step=t, actor_id=i)) for i in range(env.spec.num_actors)]
            r = env.step(s, acts if env.spec.num_actors > 1 else acts[0])
            out.append(r.reward)
            s = r.state
            if r.done:
                break
        return out

    assert rollout() == rollout()


def test_unknown_env():
    with pytest.raises(UsageError):
        envs.make("cartpole")
