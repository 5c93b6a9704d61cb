"""Controller-side reinforcement learning: REINFORCE and PPO-clip.

A learner owns one policy network per actor (the joint policy is their
product, so joint log-likelihoods add) and one value network over the global
observation. Everything is a pure function of its inputs and a StreamKey, so
the same update gives the same parameters whether it runs at the controller
or at an actor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import prng
from .errors import TrainingError, UsageError
from .policy import (
    AdamState,
    PolicyParams,
    adam_step,
    policy_terms,
    value,
    value_loss_grad,
)

ALGORITHMS = ("PPO", "REINFORCE")


@dataclass(frozen=True)
class LearnerConfig:
    algorithm: str = "PPO"
    lr: float = 3e-3
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_coef: float = 0.2
    update_epochs: int = 4
    num_minibatches: int = 4
    ent_coef: float = 0.01
    max_grad_norm: float | None = 0.5
    value_epochs: int | None = None
    anneal_lr: bool = False
    per_actor_ratio: bool = False
    reward_scale: float = 1.0   # value targets only see scaled rewards

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise UsageError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise UsageError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.clip_coef < 1.0:
            raise UsageError(f"clip_coef must lie in (0, 1), got {self.clip_coef}")
        if not (math.isfinite(self.reward_scale) and self.reward_scale > 0):
            raise UsageError(f"reward_scale must be positive, got {self.reward_scale}")
        if self.update_epochs < 1 or self.num_minibatches < 1:
            raise UsageError("update_epochs and num_minibatches must be positive")


@dataclass(frozen=True)
class Trajectory:
    """One batch window. ``obs[i]`` / ``actions[i]`` belong to actor ``i``."""

    obs: Sequence[np.ndarray]
    actions: Sequence[np.ndarray]
    global_obs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    next_global_obs: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rewards, dtype=np.float64)
        if not np.all(np.isfinite(r)):
            raise UsageError("trajectory rewards must be finite")
        if len(self.obs) != len(self.actions):
            raise UsageError("one observation and one action stream per actor required")
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "dones", np.asarray(self.dones, dtype=bool))

    def __len__(self) -> int:
        return self.rewards.size


@dataclass(frozen=True, eq=False)
class LearnerState:
    policies: tuple[PolicyParams, ...]
    value: PolicyParams
    policy_opt: tuple[AdamState, ...]
    value_opt: AdamState

    @classmethod
    def fresh(cls, policies: Sequence[PolicyParams], value_params: PolicyParams) -> "LearnerState":
        return cls(
            tuple(policies),
            value_params,
            tuple(AdamState.zeros(p.arch.n_params) for p in policies),
            AdamState.zeros(value_params.arch.n_params),
        )


def compute_returns_and_advantages(rewards, dones, values, last_value: float, gamma: float,
                                   lam: float, normalize: bool = True):
    """Discounted returns and GAE(lambda) advantages.

    ``dones[t]`` marks the end of an episode at step ``t``; nothing is
    bootstrapped across it. ``last_value`` bootstraps past the window end when
    the final step is not terminal. Returns are ``advantage + value`` prior to
    normalization.
    """
    r = np.asarray(rewards, dtype=np.float64)
    d = np.asarray(dones, dtype=bool)
    v = np.asarray(values, dtype=np.float64)
    T = r.size
    adv = np.zeros(T)
    gae = 0.0
    for t in range(T - 1, -1, -1):
        if d[t]:
            next_v, gae = 0.0, 0.0
        else:
            next_v = last_value if t == T - 1 else v[t + 1]
        delta = r[t] + gamma * next_v - v[t]
        gae = delta + gamma * lam * gae
        adv[t] = gae
    returns = adv + v
    if normalize:
        adv = normalize_advantages(adv)
    return returns, adv


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def joint_log_prob(policies: Sequence[PolicyParams], obs, actions) -> np.ndarray:
    return sum(policy_terms(p, o, a).logp for p, o, a in zip(policies, obs, actions))


def policy_gradient(policies: Sequence[PolicyParams], obs, actions, weights) -> list[np.ndarray]:
    """Gradient of ``sum(weights * log pi(a|s))`` for each actor's network."""
    return [policy_terms(p, o, a).backward(weights) for p, o, a in zip(policies, obs, actions)]


def ppo_surrogate(logp_new, logp_old, adv, clip_coef: float):
    """Clipped surrogate loss (to minimize) and its derivative w.r.t. ``logp_new``."""
    ratio = np.exp(logp_new - logp_old)
    unclipped = -adv * ratio
    clipped = -adv * np.clip(ratio, 1.0 - clip_coef, 1.0 + clip_coef)
    loss = np.maximum(unclipped, clipped)
    # the clipped branch is flat in the ratio wherever it is the active maximum
    use_unclipped = unclipped >= clipped
    dloss = np.where(use_unclipped, -adv * ratio, 0.0)
    n = ratio.size
    return float(loss.mean()), dloss / n


def _lr(cfg: LearnerConfig, progress: float) -> float:
    return cfg.lr * (1.0 - progress) if cfg.anneal_lr else cfg.lr


def _check(x: float, what: str) -> None:
    if not math.isfinite(x):
        raise TrainingError(f"{what} became {x}")


def rl_update(state: LearnerState, traj: Trajectory, cfg: LearnerConfig, key: prng.StreamKey,
              progress: float = 0.0) -> LearnerState:
    """One learner epoch on ``traj``; ``progress`` in [0, 1) drives lr annealing."""
    if len(traj) == 0:
        raise UsageError("empty trajectory")
    lr = _lr(cfg, progress)
    values = value(state.value, traj.global_obs)
    last_value = float(value(state.value, traj.next_global_obs[None, :])[0])
    lam = cfg.gae_lambda if cfg.algorithm == "PPO" else 1.0
    returns, adv = compute_returns_and_advantages(
        traj.rewards * cfg.reward_scale, traj.dones, values, last_value, cfg.gamma, lam)
    if cfg.algorithm == "PPO":
        return _ppo(state, traj, returns, adv, cfg, key, lr)
    return _reinforce(state, traj, returns, adv, cfg, lr)


def _policy_step(state: LearnerState, obs, actions, w_logp, w_ent, lr, cfg):
    policies, opts = [], []
    for p, o, a, opt in zip(state.policies, obs, actions, state.policy_opt):
        g = policy_terms(p, o, a).backward(w_logp, w_ent)
        # descend on the negated objective
        p, opt = adam_step(p, -g, opt, lr, cfg.max_grad_norm)
        policies.append(p)
        opts.append(opt)
    return tuple(policies), tuple(opts)


def _value_steps(vp, vopt, states, targets, steps, lr, cfg):
    for _ in range(steps):
        loss, g = value_loss_grad(vp, states, targets)
        _check(loss, "value loss")
        vp, vopt = adam_step(vp, g, vopt, lr, cfg.max_grad_norm)
    return vp, vopt


def _reinforce(state, traj, returns, adv, cfg, lr):
    n = len(traj)
    policies, opts = _policy_step(state, traj.obs, traj.actions, adv / n,
                                  cfg.ent_coef / n if cfg.ent_coef else None, lr, cfg)
    vp, vopt = _value_steps(state.value, state.value_opt, traj.global_obs, returns,
                            cfg.value_epochs or cfg.update_epochs, lr, cfg)
    return LearnerState(policies, vp, opts, vopt)


def _ppo(state, traj, returns, adv, cfg, key, lr):
    n = len(traj)
    logp_old = [policy_terms(p, o, a).logp for p, o, a in zip(state.policies, traj.obs, traj.actions)]
    mb = max(1, n // cfg.num_minibatches)
    policies, popt = state.policies, state.policy_opt
    vp, vopt = state.value, state.value_opt
    for epoch in range(cfg.update_epochs):
        perm = prng.permutation(key.with_(purpose=prng.Purpose.SHUFFLE, step=epoch), n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            obs = [o[idx] for o in traj.obs]
            acts = [np.asarray(a)[idx] for a in traj.actions]
            terms = [policy_terms(p, o, a) for p, o, a in zip(policies, obs, acts)]
            if cfg.per_actor_ratio:
                # each actor clips its own ratio against the shared advantage
                grads = []
                for t, lo in zip(terms, logp_old):
                    loss, d = ppo_surrogate(t.logp, lo[idx], adv[idx], cfg.clip_coef)
                    _check(loss, "policy loss")
                    grads.append(d)
            else:
                logp_new = sum(t.logp for t in terms)
                loss, dlogp = ppo_surrogate(logp_new, sum(lo for lo in logp_old)[idx], adv[idx],
                                            cfg.clip_coef)
                _check(loss, "policy loss")
                grads = [dlogp] * len(terms)
            new_p, new_o = [], []
            for p, t, opt, dlogp in zip(policies, terms, popt, grads):
                g = t.backward(dlogp, -cfg.ent_coef / idx.size if cfg.ent_coef else None)
                p, opt = adam_step(p, g, opt, lr, cfg.max_grad_norm)
                new_p.append(p)
                new_o.append(opt)
            policies, popt = tuple(new_p), tuple(new_o)
            vp, vopt = _value_steps(vp, vopt, traj.global_obs[idx], returns[idx], 1, lr, cfg)
    return replace(state, policies=policies, policy_opt=popt, value=vp, value_opt=vopt)
