"""Run configuration: a flat, typed ``key = value`` text format.

One setting per line, ``#`` starts a comment, dotted keys group settings::

    env = gridworld
    scheme = GRASP
    total_steps = 51200        # environment steps
    orc.N = 256                # candidates per message

Unset keys take per-environment defaults (see ``ENV_DEFAULTS``), then global
defaults. Errors carry the 1-based line of the offending setting.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .codec.orc import OrcConfig
from .codec.reward import RewardScheme
from .envs import REGISTRY, make
from .errors import ConfigError, UsageError
from .learner import LearnerConfig


class Scheme(enum.Enum):
    GRASP = "GRASP"
    ASC = "ASC"
    FR = "FR"
    QR16 = "QR16"
    QR8 = "QR8"
    QR4 = "QR4"

    @property
    def learner_at_controller(self) -> bool:
        return self in (Scheme.GRASP, Scheme.ASC)

    @property
    def reward_scheme(self) -> RewardScheme | None:
        return None if self.learner_at_controller else RewardScheme[self.value]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("auto", "none") else float(text)


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _range(text: str) -> tuple[float, float] | None:
    if text.strip().lower() == "auto":
        return None
    lo, hi = (float(x) for x in text.replace(",", " ").split())
    return lo, hi


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t
    return parse


# key -> (parser, default); a default of ``...`` means required
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "env": (_choice(*REGISTRY), ...),
    "scheme": (_choice(*(s.value for s in Scheme)), "GRASP"),
    "algorithm": (_choice("PPO", "REINFORCE"), "PPO"),
    "total_steps": (int, 51200),
    "batch_size": (int, 256),
    "eval_interval": (int, 2560),
    "eval_episodes": (int, 30),
    "eval_mode": (_choice("stochastic", "mode"), "stochastic"),
    "run_seed": (int, 0),
    "transport": (_choice("inproc", "stream"), "inproc"),
    "check_lockstep": (_bool, True),
    "output_dir": (str, "runs/out"),
    "orc.N": (int, 256),
    "orc.zipf_alpha": (_opt_float, None),
    "learner.lr": (float, 3e-3),
    "learner.gamma": (float, 0.99),
    "learner.gae_lambda": (float, 0.95),
    "learner.clip_coef": (float, 0.2),
    "learner.update_epochs": (int, 4),
    "learner.num_minibatches": (int, 4),
    "learner.ent_coef": (float, 0.01),
    "learner.max_grad_norm": (_opt_float, 0.5),
    "learner.anneal_lr": (_bool, False),
    "learner.reward_scale": (float, 1.0),
    "learner.per_actor_ratio": (_bool, False),
    "bc.lr": (float, 3e-3),
    "bc.steps": (int, 20),
    "policy.hidden": (_int_tuple, (32, 32)),
    "policy.init_log_std": (float, 0.0),
    "qr.range": (_range, None),
}

ENV_DEFAULTS: dict[str, dict[str, Any]] = {
    "gridworld": {"bc.steps": 1, "bc.lr": 1.5e-3, "learner.lr": 1e-2, "learner.anneal_lr": True},
    "pointnav": {"learner.ent_coef": 0.0, "policy.init_log_std": -0.5,
                 "learner.reward_scale": 0.1, "learner.gamma": 0.8},
    "spreadlite": {"learner.ent_coef": 0.0, "policy.init_log_std": -0.5,
                   "learner.reward_scale": 0.1, "learner.gamma": 0.5},
}


@dataclass(frozen=True)
class RunConfig:
    env: str
    scheme: Scheme = Scheme.GRASP
    total_steps: int = 51200
    batch_size: int = 256
    eval_interval: int = 2560
    eval_episodes: int = 30
    eval_mode: str = "stochastic"
    run_seed: int = 0
    transport: str = "inproc"
    check_lockstep: bool = True
    output_dir: str = "runs/out"
    orc: OrcConfig = field(default_factory=OrcConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    bc_lr: float = 3e-3
    bc_steps: int = 20
    hidden: tuple[int, ...] = (32, 32)
    init_log_std: float = 0.0
    qr_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.env not in REGISTRY:
            raise ConfigError(f"env: unknown environment {self.env!r}", field="env")
        if not isinstance(self.scheme, Scheme):
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.batch_size < 1 or self.total_steps < self.batch_size:
            raise ConfigError("total_steps must be at least batch_size >= 1", field="total_steps")
        if self.total_steps % self.batch_size:
            raise ConfigError(
                f"total_steps ({self.total_steps}) must be a multiple of batch_size ({self.batch_size})",
                field="total_steps")
        if self.eval_interval < 1 or self.eval_interval % self.batch_size:
            raise ConfigError(
                f"eval_interval ({self.eval_interval}) must be a positive multiple of batch_size",
                field="eval_interval")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be positive", field="eval_episodes")
        if self.qr_range is not None and not self.qr_range[0] < self.qr_range[1]:
            raise ConfigError("qr.range must satisfy min < max", field="qr.range")

    @property
    def reward_range(self) -> tuple[float, float]:
        return self.qr_range or make(self.env).spec.reward_range

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def as_flat(self) -> dict[str, Any]:
        """Resolved settings keyed as in the text format."""
        return {
            "env": self.env,
            "scheme": self.scheme.value,
            "total_steps": self.total_steps,
            "batch_size": self.batch_size,
            "eval_interval": self.eval_interval,
            "eval_episodes": self.eval_episodes,
            "eval_mode": self.eval_mode,
            "algorithm": self.learner.algorithm,
            "run_seed": self.run_seed,
            "transport": self.transport,
            "check_lockstep": self.check_lockstep,
            "output_dir": self.output_dir,
            "orc.N": self.orc.N,
            "orc.zipf_alpha": self.orc.zipf_alpha,
            **{f"learner.{f.name}": getattr(self.learner, f.name)
               for f in dataclasses.fields(LearnerConfig)
               if f.name not in ("algorithm", "value_epochs")},
            "bc.lr": self.bc_lr,
            "bc.steps": self.bc_steps,
            "policy.hidden": list(self.hidden),
            "policy.init_log_std": self.init_log_std,
            "qr.range": list(self.reward_range),
        }


def parse_lines(lines, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value text, line number)``; later lines override earlier ones."""
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}: expected 'key = value', got {text!r}", line=lineno)
        key, val = (part.strip() for part in text.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}: unknown setting {key!r}", field=key, line=lineno)
        raw[key] = (val, lineno)
    return raw


def build_config(raw: dict[str, tuple[str, int | None]], source: str = "<config>") -> RunConfig:
    values: dict[str, Any] = {}
    for key, (text, lineno) in raw.items():
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"{source}: {key}: {exc}", field=key, line=lineno) from None
    if "env" not in values:
        raise ConfigError(f"{source}: required setting 'env' is missing", field="env")
    merged = {k: d for k, (_, d) in SCHEMA.items() if d is not ...}
    merged.update(ENV_DEFAULTS.get(values["env"], {}))
    merged.update(values)

    def line_of(key):
        return raw.get(key, (None, None))[1]

    try:
        orc = OrcConfig(merged["orc.N"], merged["orc.zipf_alpha"])
    except UsageError as exc:
        raise ConfigError(f"{source}: {exc}", field="orc.N", line=line_of("orc.N")) from None
    try:
        learner = LearnerConfig(algorithm=merged["algorithm"],
                                **{k.split(".", 1)[1]: v for k, v in merged.items()
                                   if k.startswith("learner.")})
    except UsageError as exc:
        raise ConfigError(f"{source}: {exc}", field="learner") from None
    try:
        return RunConfig(
            env=merged["env"],
            scheme=Scheme(merged["scheme"]),
            total_steps=merged["total_steps"],
            batch_size=merged["batch_size"],
            eval_interval=merged["eval_interval"],
            eval_episodes=merged["eval_episodes"],
            eval_mode=merged["eval_mode"],
            run_seed=merged["run_seed"],
            transport=merged["transport"],
            check_lockstep=merged["check_lockstep"],
            output_dir=merged["output_dir"],
            orc=orc,
            learner=learner,
            bc_lr=merged["bc.lr"],
            bc_steps=merged["bc.steps"],
            hidden=merged["policy.hidden"],
            init_log_std=merged["policy.init_log_std"],
            qr_range=merged["qr.range"],
        )
    except ConfigError as exc:
        line = line_of(exc.field) if exc.field else None
        raise ConfigError(f"{source}: {exc}", field=exc.field, line=line) from None


def load_config(path, overrides: dict[str, str] | None = None) -> RunConfig:
    p = Path(path)
    try:
        lines = p.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    raw = parse_lines(lines, str(p))
    for key, val in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"override: unknown setting {key!r}", field=key)
        raw[key] = (val, None)
    return build_config(raw, str(p))


def config_from_dict(settings: dict[str, Any]) -> RunConfig:
    """Build from already-typed or textual values (used by tests and sweeps)."""
    raw = {}
    for k, v in settings.items():
        if k not in SCHEMA:
            raise ConfigError(f"unknown setting {k!r}", field=k)
        if isinstance(v, (list, tuple)):
            v = " ".join(str(x) for x in v)
        raw[k] = (str(v), None)
    return build_config(raw)


def dumps(cfg: RunConfig) -> str:
    lines = []
    for k, v in cfg.as_flat().items():
        if isinstance(v, list):
            v = " ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
