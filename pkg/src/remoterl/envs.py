"""Built-in deterministic environments.

Environments are stateless objects; episode state is an explicit value passed
to :meth:`reset` / :meth:`step`. Randomness comes only from the supplied keys.
Rewards are returned already rounded to binary32, the precision at which the
environment publishes them, so a full-precision reward message is lossless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import prng
from .errors import UsageError
from .spaces import ActionSpace, Box, Discrete


def f32(x: float) -> float:
    return float(np.float32(x))


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_space: ActionSpace
    max_steps: int
    num_actors: int = 1
    global_obs_dim: int | None = None
    reward_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.global_obs_dim is None:
            object.__setattr__(self, "global_obs_dim", self.obs_dim)


@dataclass(frozen=True)
class StepResult:
    state: object
    reward: float
    done: bool


class Env:
    spec: EnvSpec

    def reset(self, key: prng.StreamKey):
        raise NotImplementedError

    def step(self, state, action, key: prng.StreamKey | None = None) -> StepResult:
        raise NotImplementedError

    def observe(self, state, actor: int = 0) -> np.ndarray:
        """Observation available to one actor (and to the controller)."""
        raise NotImplementedError

    def global_observation(self, state) -> np.ndarray:
        return self.observe(state, 0)

    def random_action(self, key: prng.StreamKey):
        space = self.spec.action_space
        if isinstance(space, Discrete):
            return min(int(prng.uniform64(key) * space.n), space.n - 1)
        u = prng.uniform_array(key, np.arange(space.dim))
        return space.low + (space.high - space.low) * u


# ---------------------------------------------------------------- gridworld

UP, DOWN, LEFT, RIGHT = range(4)
_MOVES = {UP: (0, 1), DOWN: (0, -1), LEFT: (-1, 0), RIGHT: (1, 0)}


@dataclass(frozen=True)
class GridState:
    pos: tuple[int, int]
    goal: tuple[int, int]
    t: int = 0


class GridWorld(Env):
    """Square grid with a random goal and a random distinct start.

    Reward is -0.01 per step and +1 on the step that reaches the goal, which
    ends the episode. Walls leave the agent in place.
    """

    STEP_REWARD = f32(-0.01)
    GOAL_REWARD = 1.0

    def __init__(self, size: int = 8, max_steps: int = 64):
        self.size = size
        self.spec = EnvSpec("gridworld", 4, Discrete(4), max_steps,
                            reward_range=(self.STEP_REWARD, self.GOAL_REWARD))

    def reset(self, key: prng.StreamKey) -> GridState:
        cells = self.size * self.size
        g = min(int(prng.uniform64(key.with_(counter=0)) * cells), cells - 1)
        # start is uniform over the remaining cells
        c = min(int(prng.uniform64(key.with_(counter=1)) * (cells - 1)), cells - 2)
        c += c >= g
        return GridState((c % self.size, c // self.size), (g % self.size, g // self.size))

    def step(self, state: GridState, action, key=None) -> StepResult:
        a = self.spec.action_space.canonicalize(action)
        dx, dy = _MOVES[a]
        x = min(max(state.pos[0] + dx, 0), self.size - 1)
        y = min(max(state.pos[1] + dy, 0), self.size - 1)
        nxt = GridState((x, y), state.goal, state.t + 1)
        if (x, y) == state.goal:
            return StepResult(nxt, self.GOAL_REWARD, True)
        return StepResult(nxt, self.STEP_REWARD, nxt.t >= self.spec.max_steps)

    def observe(self, state: GridState, actor: int = 0) -> np.ndarray:
        s = 2.0 / (self.size - 1)
        return np.array([state.pos[0] * s - 1, state.pos[1] * s - 1,
                         state.goal[0] * s - 1, state.goal[1] * s - 1])

    def optimal_return(self, state: GridState) -> float:
        """Return of the shortest path from ``state`` (exact, undiscounted)."""
        d = abs(state.pos[0] - state.goal[0]) + abs(state.pos[1] - state.goal[1])
        if d == 0:
            return 0.0
        if d > self.spec.max_steps:
            return self.spec.max_steps * self.STEP_REWARD
        return self.GOAL_REWARD + (d - 1) * self.STEP_REWARD

    def expected_optimal_return(self) -> float:
        """Optimal return averaged over the reset distribution (enumerated)."""
        cells = [(x, y) for y in range(self.size) for x in range(self.size)]
        return float(np.mean([self.optimal_return(GridState(p, g))
                              for g in cells for p in cells if p != g]))


# ---------------------------------------------------------------- continuous navigation


def _uniform_points(key: prng.StreamKey, n: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    u = prng.uniform_array(key, np.arange(2 * n)).reshape(n, 2)
    return lo + (hi - lo) * u


@dataclass(frozen=True)
class NavState:
    pos: np.ndarray
    goal: np.ndarray
    t: int = 0


class PointNav(Env):
    """Point mass in [-1, 1]^2: ``x' = clip(x + 0.1 a)``, reward ``-||x' - goal||``."""

    SPEED = 0.1

    def __init__(self, max_steps: int = 64):
        self.spec = EnvSpec("pointnav", 4, Box(2), max_steps,
                            reward_range=(-math.sqrt(8.0), 0.0))

    def reset(self, key: prng.StreamKey) -> NavState:
        pts = _uniform_points(key, 2)
        return NavState(pts[0], pts[1])

    def step(self, state: NavState, action, key=None) -> StepResult:
        a = np.clip(self.spec.action_space.canonicalize(action), -1.0, 1.0)
        pos = np.clip(state.pos + self.SPEED * a, -1.0, 1.0)
        r = f32(-float(np.linalg.norm(pos - state.goal)))
        t = state.t + 1
        return StepResult(NavState(pos, state.goal, t), r, t >= self.spec.max_steps)

    def observe(self, state: NavState, actor: int = 0) -> np.ndarray:
        return np.concatenate([state.pos, state.goal])


@dataclass(frozen=True)
class SpreadState:
    agents: np.ndarray
    landmarks: np.ndarray
    t: int = 0


def spread_reward(agents: np.ndarray, landmarks: np.ndarray) -> float:
    """Minus the sum over landmarks of the distance to the nearest agent."""
    d = np.linalg.norm(landmarks[:, None, :] - agents[None, :, :], axis=-1)
    return -float(d.min(axis=1).sum())


class SpreadLite(Env):
    """N agents cover N landmarks under a shared reward.

    Each actor observes its own position followed by every landmark position;
    the global observation is all agent positions followed by the landmarks.
    """

    SPEED = 0.1

    def __init__(self, num_agents: int = 3, max_steps: int = 32):
        n = num_agents
        self.n = n
        self.spec = EnvSpec("spreadlite", 2 + 2 * n, Box(2), max_steps, num_actors=n,
                            global_obs_dim=4 * n, reward_range=(-n * math.sqrt(8.0), 0.0))

    def reset(self, key: prng.StreamKey) -> SpreadState:
        pts = _uniform_points(key, 2 * self.n)
        return SpreadState(pts[: self.n], pts[self.n:])

    def step(self, state: SpreadState, action, key=None) -> StepResult:
        acts = list(action)
        if len(acts) != self.n:
            raise UsageError(f"spreadlite needs {self.n} actions per step, got {len(acts)}")
        a = np.stack([np.clip(self.spec.action_space.canonicalize(x), -1.0, 1.0) for x in acts])
        agents = np.clip(state.agents + self.SPEED * a, -1.0, 1.0)
        r = f32(spread_reward(agents, state.landmarks))
        t = state.t + 1
        return StepResult(SpreadState(agents, state.landmarks, t), r, t >= self.spec.max_steps)

    def observe(self, state: SpreadState, actor: int = 0) -> np.ndarray:
        return np.concatenate([state.agents[actor], state.landmarks.ravel()])

    def global_observation(self, state: SpreadState) -> np.ndarray:
        return np.concatenate([state.agents.ravel(), state.landmarks.ravel()])


REGISTRY: dict[str, Callable[[], Env]] = {
    "gridworld": GridWorld,
    "pointnav": PointNav,
    "spreadlite": SpreadLite,
}


def make(name: str) -> Env:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise UsageError(f"unknown environment {name!r}; known: {sorted(REGISTRY)}") from None
