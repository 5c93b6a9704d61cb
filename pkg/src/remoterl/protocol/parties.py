"""Controller and actor state machines.

The controller observes states and rewards. Under GRASP and ASC it owns the
learner and steers the actors through action messages; under FR and QR-k it
only relays (quantized) rewards and each actor learns by itself. Actors never
see a reward under GRASP or ASC: no code path on the actor side accepts one.

Both parties derive every random draw from the run seed and the step
coordinates, so the controller's copy of each actor's clone (the mirror) and
the clone itself receive identical updates and stay bit-equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import dist, prng
from ..codec.bits import action_decode, action_encode, asc_bits, elias_delta_decode, elias_delta_encode
from ..codec.orc import EncodedMessage, orc_decode, orc_encode
from ..codec.reward import reward_decode, reward_encode
from ..config import RunConfig, Scheme
from ..envs import EnvSpec
from ..errors import DecodeError, ProtocolError, UsageError
from ..learner import LearnerState, Trajectory, rl_update
from ..policy import Arch, BcBatch, PolicyParams, bc_update, forward, init_params
from ..spaces import Discrete
from .messages import HEADER_BYTES, MsgType, WireMessage

VALUE_STREAM = 1000


def policy_arch(cfg: RunConfig, spec: EnvSpec) -> Arch:
    space = spec.action_space
    if isinstance(space, Discrete):
        return Arch(spec.obs_dim, space.n, "categorical", cfg.hidden)
    return Arch(spec.obs_dim, space.dim, "gaussian", cfg.hidden, init_log_std=cfg.init_log_std)


def value_arch(cfg: RunConfig, in_dim: int) -> Arch:
    return Arch(in_dim, 1, "value", cfg.hidden, out_scale=1.0)


@dataclass(frozen=True)
class StepInfo:
    """What an actor senses at one step: its observation and the step coordinates."""

    obs: np.ndarray
    episode: int
    t: int          # step within the episode
    step: int       # global training step


@dataclass(frozen=True)
class Charge:
    """Bits attributed to ledger row ``(step, actor)``."""

    step: int
    actor: int
    ideal: float
    wire: int
    header: int = HEADER_BYTES


def action_key(seed: int, info: StepInfo, actor: int) -> prng.StreamKey:
    return prng.StreamKey(seed, info.episode, info.t, actor, prng.Purpose.ACTION_SAMPLE)


def orc_key(seed: int, info: StepInfo, actor: int) -> prng.StreamKey:
    return prng.StreamKey(seed, info.episode, info.t, actor, prng.Purpose.CANDIDATE)


def learner_key(seed: int, epoch: int, actor: int = 0) -> prng.StreamKey:
    return prng.StreamKey(seed, episode=epoch, actor_id=actor)


def _check_padding(bits: str, used: int) -> None:
    rest = bits[used:]
    if len(rest) >= 8 or "1" in rest:
        raise DecodeError(f"{len(rest)} unexpected trailing payload bits")


def _same_action(a, b) -> bool:
    return np.array_equal(np.asarray(a), np.asarray(b))


class Controller:
    """Controller side of one run."""

    def __init__(self, cfg: RunConfig, spec: EnvSpec):
        self.cfg = cfg
        self.spec = spec
        self.scheme = cfg.scheme
        self.n = spec.num_actors
        self.space = spec.action_space
        self.n_epochs = cfg.total_steps // cfg.batch_size
        self.epoch = 0
        self._range = cfg.reward_range
        self.learner: LearnerState | None = None
        self.mirrors: list[PolicyParams] = []
        self._mirror_opt = [None] * self.n
        if self.scheme.learner_at_controller:
            arch = policy_arch(cfg, spec)
            pols = [init_params(cfg.run_seed, arch, stream=i) for i in range(self.n)]
            v = init_params(cfg.run_seed, value_arch(cfg, spec.global_obs_dim), stream=VALUE_STREAM)
            self.learner = LearnerState.fresh(pols, v)
            # each clone starts as an exact copy of its actor's policy head
            self.mirrors = list(pols)
        self._reset_window()

    def _reset_window(self):
        self._obs = [[] for _ in range(self.n)]
        self._acts = [[] for _ in range(self.n)]
        self._gobs, self._rewards, self._dones, self._kl = [], [], [], []
        self._intended = None
        self._pending: tuple[float, int] | None = None

    # ------------------------------------------------------------ per step

    def step(self, infos: list[StepInfo], global_obs) -> tuple[list[WireMessage | None], list[Charge]]:
        """Messages for this step, one per actor (``None`` where nothing is sent)."""
        seed = self.cfg.run_seed
        msgs, charges = [], []
        if self.scheme.learner_at_controller:
            intended, kl_sum = [], 0.0
            for i, info in enumerate(infos):
                P = forward(self.learner.policies[i], info.obs)
                Q = forward(self.mirrors[i], info.obs)
                kl_sum += dist.kl(P, Q)
                if self.scheme is Scheme.GRASP:
                    a, enc = orc_encode(P, Q, self.cfg.orc, orc_key(seed, info, i))
                    bits = elias_delta_encode(enc.index)
                    msgs.append(WireMessage.from_bits(MsgType.ORC_INDEX, i, info.step, bits))
                    charges.append(Charge(info.step, i, enc.ideal_bits, enc.wire_bits))
                else:
                    a = dist.sample(P, action_key(seed, info, i))
                    bits = action_encode(self.space.canonicalize(a), self.space)
                    msgs.append(WireMessage.from_bits(MsgType.ASC_ACTION, i, info.step, bits))
                    charges.append(Charge(info.step, i, float(len(bits)), len(bits)))
                intended.append(self.space.canonicalize(a))
                self._obs[i].append(np.asarray(info.obs, dtype=np.float64))
            self._gobs.append(np.asarray(global_obs, dtype=np.float64))
            self._kl.append(kl_sum)
            self._intended = intended
            return msgs, charges
        # reward relay: the previous step's reward rides on this step's message
        if self._pending is None:
            return [None] * self.n, []
        r, prev = self._pending
        msgs, charges = self._reward_messages(r, prev, infos[0].step, MsgType.REWARD)
        self._pending = None
        return msgs, charges

    def _reward_messages(self, r: float, row: int, step: int, mtype: MsgType):
        rs = self.scheme.reward_scheme
        bits = reward_encode(r, rs, self._range)
        msgs = [WireMessage.from_bits(mtype, i, step, bits) for i in range(self.n)]
        return msgs, [Charge(row, i, float(rs.bits), rs.bits) for i in range(self.n)]

    def record(self, step: int, executed: list, reward: float, done: bool) -> None:
        """Take in the actions the actors executed and the resulting reward."""
        if self.scheme.learner_at_controller:
            for i, (want, got) in enumerate(zip(self._intended, executed)):
                if not _same_action(want, got):
                    raise ProtocolError(f"step {step}: actor {i} executed {got!r}, controller chose {want!r}")
                self._acts[i].append(want)
            self._rewards.append(reward)
            self._dones.append(done)
        else:
            self._pending = (reward, step)

    # ------------------------------------------------------------ per epoch

    def end_epoch(self, last_step: int, next_global_obs):
        """Learner update. Returns ``(marks, charges, stats)`` for the epoch boundary."""
        if not (self._rewards if self.scheme.learner_at_controller else self._pending):
            raise UsageError("epoch update on an empty batch")
        stats = {"kl_bits": math.nan, "bc_loss": math.nan}
        if self.scheme.learner_at_controller:
            traj = Trajectory(
                obs=[np.stack(o) for o in self._obs],
                actions=[np.asarray(a) for a in self._acts],
                global_obs=np.stack(self._gobs),
                rewards=np.asarray(self._rewards),
                dones=np.asarray(self._dones),
                next_global_obs=np.asarray(next_global_obs, dtype=np.float64),
            )
            self.learner = rl_update(self.learner, traj, self.cfg.learner,
                                     learner_key(self.cfg.run_seed, self.epoch),
                                     self.epoch / self.n_epochs)
            bc_loss = 0.0
            for i in range(self.n):
                self.mirrors[i], self._mirror_opt[i], losses = bc_update(
                    self.mirrors[i], BcBatch(traj.obs[i], traj.actions[i]), self._mirror_opt[i],
                    self.cfg.bc_lr, self.cfg.bc_steps)
                bc_loss += losses[0]
            stats = {"kl_bits": float(np.mean(self._kl)), "bc_loss": bc_loss}
            marks = [WireMessage(MsgType.EPOCH_MARK, i, last_step) for i in range(self.n)]
            charges = [Charge(last_step, i, 0.0, 0) for i in range(self.n)]
        else:
            if self._pending is None:
                raise ProtocolError("epoch ended without a reward to flush")
            r, prev = self._pending
            marks, charges = self._reward_messages(r, prev, last_step, MsgType.EPOCH_MARK)
        self.epoch += 1
        self._reset_window()
        return marks, charges, stats

    def check_lockstep(self, digests: list[int]) -> bool | None:
        """Compare actor clone digests with the mirrors (``None`` without mirrors)."""
        if not self.mirrors:
            return None
        return all(m.digest() == d for m, d in zip(self.mirrors, digests))

    @property
    def policies(self):
        return self.learner.policies if self.learner else None


class Actor:
    """Actor ``index``: acts on its own observation, learns only what its scheme allows."""

    def __init__(self, cfg: RunConfig, spec: EnvSpec, index: int):
        self.cfg = cfg
        self.index = index
        self.scheme = cfg.scheme
        self.space = spec.action_space
        self.n_epochs = cfg.total_steps // cfg.batch_size
        self.epoch = 0
        self._range = cfg.reward_range
        arch = policy_arch(cfg, spec)
        self._opt = None
        self.learner: LearnerState | None = None
        if self.scheme.learner_at_controller:
            self.clone = init_params(cfg.run_seed, arch, stream=index)
        else:
            pol = init_params(cfg.run_seed, arch, stream=index)
            v = init_params(cfg.run_seed, value_arch(cfg, spec.obs_dim), stream=VALUE_STREAM + index)
            self.learner = LearnerState.fresh([pol], v)
        self._reset_window()

    def _reset_window(self):
        self._obs, self._acts, self._infos, self._rewards = [], [], [], []

    @property
    def policy(self) -> PolicyParams:
        """The parameters this actor acts with."""
        return self.clone if self.learner is None else self.learner.policies[0]

    def digest(self) -> int:
        return self.policy.digest()

    def _expect(self, msg: WireMessage | None, mtype: MsgType, info_step: int):
        if msg is None:
            raise ProtocolError(f"actor {self.index}: missing {mtype.name} message at step {info_step}")
        if msg.msg_type is MsgType.REWARD and self.scheme.learner_at_controller:
            raise ProtocolError(f"actor {self.index}: reward message delivered to a reward-blind actor")
        if msg.msg_type is not mtype:
            raise ProtocolError(f"actor {self.index}: expected {mtype.name}, got {msg.msg_type.name}")
        if msg.actor_id != self.index or msg.step != info_step:
            raise ProtocolError(f"actor {self.index}: message addressed to actor {msg.actor_id} "
                                f"step {msg.step}, expected step {info_step}")

    def _decode_reward(self, msg: WireMessage) -> float:
        rs = self.scheme.reward_scheme
        bits = msg.bits
        _check_padding(bits, rs.bits)
        return reward_decode(bits[: rs.bits], rs, self._range)

    def step(self, info: StepInfo, msg: WireMessage | None):
        seed = self.cfg.run_seed
        if self.scheme is Scheme.GRASP:
            self._expect(msg, MsgType.ORC_INDEX, info.step)
            bits = msg.bits
            n, used = elias_delta_decode(bits)
            _check_padding(bits, used)
            if not 1 <= n <= self.cfg.orc.N:
                raise DecodeError(f"candidate index {n} outside 1..{self.cfg.orc.N}")
            Q = forward(self.clone, info.obs)
            a = orc_decode(EncodedMessage(n, math.nan, used), Q, orc_key(seed, info, self.index))
        elif self.scheme is Scheme.ASC:
            self._expect(msg, MsgType.ASC_ACTION, info.step)
            k = asc_bits(self.space)
            bits = msg.bits
            _check_padding(bits, k)
            a = action_decode(bits[:k], self.space)
        else:
            if self._infos:
                self._expect(msg, MsgType.REWARD, info.step)
                self._rewards.append(self._decode_reward(msg))
            elif msg is not None:
                raise ProtocolError(f"actor {self.index}: unexpected message at the start of an epoch")
            a = dist.sample(forward(self.policy, info.obs), action_key(seed, info, self.index))
        a = self.space.canonicalize(a)
        self._obs.append(np.asarray(info.obs, dtype=np.float64))
        self._acts.append(a)
        self._infos.append(info)
        return a

    def end_epoch(self, mark: WireMessage, next_info: StepInfo) -> int:
        """Epoch-boundary update; returns the digest of the acting parameters."""
        if not self._infos:
            raise UsageError("epoch update on an empty batch")
        last = self._infos[-1].step
        self._expect(mark, MsgType.EPOCH_MARK, last)
        obs = np.stack(self._obs)
        acts = np.asarray(self._acts)
        if self.learner is None:
            self.clone, self._opt, _ = bc_update(self.clone, BcBatch(obs, acts), self._opt,
                                                 self.cfg.bc_lr, self.cfg.bc_steps)
        else:
            self._rewards.append(self._decode_reward(mark))
            # an episode ended at step k exactly when step k+1 starts a new one
            following = self._infos[1:] + [next_info]
            dones = np.array([nx.t == 0 for nx in following])
            traj = Trajectory([obs], [acts], obs, np.asarray(self._rewards), dones,
                              np.asarray(next_info.obs, dtype=np.float64))
            self.learner = rl_update(self.learner, traj, self.cfg.learner,
                                     learner_key(self.cfg.run_seed, self.epoch, self.index),
                                     self.epoch / self.n_epochs)
        self.epoch += 1
        self._reset_window()
        return self.digest()


def controller_step(cs: Controller, infos, global_obs):
    return cs.step(infos, global_obs)


def actor_step(actor: Actor, info: StepInfo, msg: WireMessage | None):
    return actor.step(info, msg)
