"""Run a full experiment: a world loop around the controller and its actors."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .. import __version__, dist, prng
from ..config import RunConfig
from ..envs import Env, make
from ..errors import ProtocolError
from ..ledger import EpochRow, EvalRow, RunLedger
from ..policy import PolicyParams, mlp_forward
from ..spaces import Discrete
from .parties import Actor, Controller, StepInfo
from .transport import TRANSPORTS

# episode numbers for evaluation, disjoint from training episodes
EVAL_EPISODE_BASE = 1 << 31
RANDOM_EPISODE_BASE = EVAL_EPISODE_BASE + (1 << 30)


def _reset_key(seed: int, episode: int) -> prng.StreamKey:
    return prng.StreamKey(seed, episode=episode, purpose=prng.Purpose.ENV_NOISE)


def _row_action(params: PolicyParams, out_row: np.ndarray, key: prng.StreamKey, mode: str):
    if params.arch.head == "categorical":
        d = dist.Categorical.from_logits(out_row)
        return int(np.argmax(d.probs)) if mode == "mode" else dist.sample(d, key)
    if mode == "mode":
        return out_row.copy()
    return dist.sample(dist.DiagGaussian(out_row, np.exp(params.log_std)), key)


def evaluate(env: Env, policies: Sequence[PolicyParams], episodes: int, run_seed: int,
             mode: str = "stochastic", base: int = EVAL_EPISODE_BASE) -> np.ndarray:
    """Undiscounted return of each of ``episodes`` evaluation episodes.

    Episodes run side by side so each actor's network sees one batched forward
    per time step. Episode ``j`` always uses the same reset and action keys,
    so different policies are compared on common random numbers.
    """
    n = env.spec.num_actors
    space = env.spec.action_space
    states = [env.reset(_reset_key(run_seed, base + j)) for j in range(episodes)]
    returns = np.zeros(episodes)
    active = list(range(episodes))
    t = 0
    while active:
        acts = {j: [] for j in active}
        for i, p in enumerate(policies):
            X = np.stack([env.observe(states[j], i) for j in active])
            out, _ = mlp_forward(p, X)
            for row, j in enumerate(active):
                key = prng.StreamKey(run_seed, base + j, t, i, prng.Purpose.ACTION_SAMPLE)
                acts[j].append(space.canonicalize(_row_action(p, out[row], key, mode)))
        still = []
        for j in active:
            res = env.step(states[j], acts[j] if n > 1 else acts[j][0])
            states[j] = res.state
            returns[j] += res.reward
            if not res.done:
                still.append(j)
        active = still
        t += 1
    return returns


def random_returns(env: Env, episodes: int, run_seed: int) -> np.ndarray:
    """Returns of a uniformly random policy (the 0 point of normalized scores)."""
    n = env.spec.num_actors
    out = np.zeros(episodes)
    for j in range(episodes):
        ep = RANDOM_EPISODE_BASE + j
        s = env.reset(_reset_key(run_seed, ep))
        t, done = 0, False
        while not done:
            acts = [env.random_action(prng.StreamKey(run_seed, ep, t, i, prng.Purpose.ACTION_SAMPLE))
                    for i in range(n)]
            res = env.step(s, acts if n > 1 else acts[0])
            s, done = res.state, res.done
            out[j] += res.reward
            t += 1
    return out


def _mean_std(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x))


def run_experiment(cfg: RunConfig, transport: str | None = None, env: Env | None = None,
                   on_epoch: Callable[[int, RunLedger], None] | None = None,
                   keep_frames: bool = False) -> RunLedger:
    """Train for ``cfg.total_steps`` steps and return the filled ledger.

    ``transport`` overrides ``cfg.transport``; ``env`` overrides the registry
    lookup (for instrumented environments). With ``keep_frames`` every
    controller-to-actor frame is retained on ``ledger.meta["frames"]``.
    """
    env = env if env is not None else make(cfg.env)
    spec = env.spec
    n = spec.num_actors
    seed = cfg.run_seed
    ctrl = Controller(cfg, spec)
    actors = [Actor(cfg, spec, i) for i in range(n)]
    chan = TRANSPORTS[transport or cfg.transport](actors)
    chan.log.keep = keep_frames
    led = RunLedger.empty(cfg.env, cfg.scheme.value, cfg.total_steps, n)
    learner_here = cfg.scheme.learner_at_controller
    acting = [a.policy for a in actors]
    header_total = 0

    def run_eval(step: int):
        pols = ctrl.policies if learner_here else acting
        r = evaluate(env, pols, cfg.eval_episodes, seed, cfg.eval_mode)
        m, s = _mean_std(r)
        cm = cs = math.nan
        if learner_here:
            cm, cs = _mean_std(evaluate(env, ctrl.mirrors, cfg.eval_episodes, seed, cfg.eval_mode))
        led.evals.append(EvalRow(step, m, s, cm, cs))

    def charge(charges):
        nonlocal header_total
        for c in charges:
            led.bits_ideal[c.step, c.actor] += c.ideal
            led.bits_wire[c.step, c.actor] += c.wire
            led.header_bytes[c.step, c.actor] += c.header
            header_total += c.header

    try:
        led.random_mean, led.random_std = _mean_std(random_returns(env, cfg.eval_episodes, seed))
        run_eval(0)
        episode, t_ep = 0, 0
        state = env.reset(_reset_key(seed, episode))

        def infos_at(step: int):
            return [StepInfo(env.observe(state, i), episode, t_ep, step) for i in range(n)]

        infos = infos_at(0)
        for step in range(cfg.total_steps):
            msgs, charges = ctrl.step(infos, env.global_observation(state))
            charge(charges)
            executed = chan.step(infos, msgs)
            res = env.step(state, executed if n > 1 else executed[0])
            ctrl.record(step, executed, res.reward, res.done)
            if res.done:
                episode, t_ep = episode + 1, 0
                state = env.reset(_reset_key(seed, episode))
            else:
                state, t_ep = res.state, t_ep + 1
            infos = infos_at(step + 1)
            if (step + 1) % cfg.batch_size == 0:
                marks, charges, stats = ctrl.end_epoch(step, env.global_observation(state))
                charge(charges)
                digests, acting = chan.epoch(marks, infos)
                ok = ctrl.check_lockstep(digests)
                if ok is False and cfg.check_lockstep:
                    raise ProtocolError(f"lockstep lost at epoch {ctrl.epoch - 1}: "
                                        f"actor digests {digests} differ from the mirrors")
                led.epochs.append(EpochRow(step + 1, stats["kl_bits"], stats["bc_loss"], ok))
                if (step + 1) % cfg.eval_interval == 0:
                    run_eval(step + 1)
                if on_epoch is not None:
                    on_epoch(ctrl.epoch, led)
    finally:
        chan.close()

    log = chan.log
    led.meta = {
        "version": __version__,
        "config": cfg.as_flat(),
        "channel_bits_wire": int(sum(log.payload_bits)),
        "channel_header_bytes": int(sum(log.header_bytes)),
        "channel_frames": int(sum(log.frames)),
        "charged_header_bytes": int(header_total),
        "total_bits_ideal": led.total_bits(ideal=True),
        "total_bits_wire": int(led.total_bits(ideal=False)),
        "actor_bits_ideal": [float(x) for x in led.actor_totals(ideal=True)],
        "message_types": sorted(t.name for t in log.types),
    }
    if keep_frames:
        led.meta["frames"] = log.payloads
    return led
