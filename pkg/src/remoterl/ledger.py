"""Run ledger: per-step bit accounting, evaluation returns and epoch statistics.

``ledger.csv`` holds every row of a run in one table with a ``kind`` column
(schema version ``LEDGER_SCHEMA``)::

    kind      one of step, eval, epoch, baseline
    step      environment step (step rows: the step; eval/epoch rows: steps done)
    actor     actor index (step rows only)
    scheme    GRASP, ASC, FR, QR16, QR8 or QR4
    bits_ideal, bits_wire, header_bytes      step rows
    return_mean, return_std, clone_mean, clone_std   eval and baseline rows
    kl_bits, bc_loss, lockstep_ok            epoch rows

Cells that do not apply to a row kind are empty. Floats are written with
``repr`` so a ledger read back is bit-identical to the one written.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DecodeError, UsageError

LEDGER_SCHEMA = 1
COLUMNS = (
    "kind", "step", "actor", "scheme",
    "bits_ideal", "bits_wire", "header_bytes",
    "return_mean", "return_std", "clone_mean", "clone_std",
    "kl_bits", "bc_loss", "lockstep_ok",
)


@dataclass(frozen=True)
class EvalRow:
    step: int
    return_mean: float
    return_std: float
    clone_mean: float = math.nan
    clone_std: float = math.nan


@dataclass(frozen=True)
class EpochRow:
    step: int
    kl_bits: float = math.nan
    bc_loss: float = math.nan
    lockstep_ok: bool | None = None


@dataclass
class RunLedger:
    env: str
    scheme: str
    bits_ideal: np.ndarray          # (T, n_actors)
    bits_wire: np.ndarray           # (T, n_actors), integers
    header_bytes: np.ndarray        # (T, n_actors), integers
    evals: list[EvalRow] = field(default_factory=list)
    epochs: list[EpochRow] = field(default_factory=list)
    random_mean: float = math.nan
    random_std: float = math.nan
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, env: str, scheme: str, total_steps: int, n_actors: int, **kw) -> "RunLedger":
        shape = (total_steps, n_actors)
        return cls(env, scheme, np.zeros(shape), np.zeros(shape, dtype=np.int64),
                   np.zeros(shape, dtype=np.int64), **kw)

    @property
    def total_steps(self) -> int:
        return self.bits_ideal.shape[0]

    @property
    def n_actors(self) -> int:
        return self.bits_ideal.shape[1]

    def bits_per_step(self, ideal: bool = True) -> np.ndarray:
        """Bits summed over actors for each step."""
        return (self.bits_ideal if ideal else self.bits_wire).sum(axis=1)

    def total_bits(self, ideal: bool = True) -> float:
        return float(self.bits_per_step(ideal).sum())

    def actor_totals(self, ideal: bool = True) -> np.ndarray:
        return (self.bits_ideal if ideal else self.bits_wire).sum(axis=0)

    def epoch_mean_bits(self, batch_size: int, ideal: bool = True) -> np.ndarray:
        b = self.bits_per_step(ideal)
        if b.size % batch_size:
            raise UsageError("batch_size does not divide the number of steps")
        return b.reshape(-1, batch_size).mean(axis=1)

    def eval_array(self, column: str) -> np.ndarray:
        return np.array([getattr(r, column) for r in self.evals], dtype=np.float64)

    @property
    def eval_steps(self) -> np.ndarray:
        return np.array([r.step for r in self.evals], dtype=np.int64)

    @property
    def final_return(self) -> float:
        return self.evals[-1].return_mean

    @property
    def final_clone_return(self) -> float:
        return self.evals[-1].clone_mean

    # -------------------------------------------------------------- persistence

    def rows(self):
        s = self.scheme
        T, A = self.bits_ideal.shape
        for t in range(T):
            for i in range(A):
                yield {"kind": "step", "step": t, "actor": i, "scheme": s,
                       "bits_ideal": float(self.bits_ideal[t, i]),
                       "bits_wire": int(self.bits_wire[t, i]),
                       "header_bytes": int(self.header_bytes[t, i])}
        for r in self.evals:
            yield {"kind": "eval", "step": r.step, "scheme": s,
                   "return_mean": r.return_mean, "return_std": r.return_std,
                   "clone_mean": r.clone_mean, "clone_std": r.clone_std}
        for r in self.epochs:
            yield {"kind": "epoch", "step": r.step, "scheme": s, "kl_bits": r.kl_bits,
                   "bc_loss": r.bc_loss, "lockstep_ok": r.lockstep_ok}
        yield {"kind": "baseline", "step": 0, "scheme": s,
               "return_mean": self.random_mean, "return_std": self.random_std}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in self.rows():
                w.writerow([_cell(row.get(c)) for c in COLUMNS])

    def write(self, out_dir) -> Path:
        """Write ``ledger.csv`` and ``meta.json`` into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.write_csv(out / "ledger.csv")
        meta = {"schema": LEDGER_SCHEMA, "env": self.env, "scheme": self.scheme,
                "total_steps": self.total_steps, "n_actors": self.n_actors, **self.meta}
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return out


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _f(text: str) -> float:
    return float(text) if text else math.nan


def read_ledger(path) -> RunLedger:
    """Load a ledger written by :meth:`RunLedger.write` (a directory or a csv path)."""
    p = Path(path)
    if p.is_dir():
        p = p / "ledger.csv"
    meta_path = p.with_name("meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    steps: dict[tuple[int, int], tuple[float, int, int]] = {}
    evals, epochs = [], []
    env = meta.get("env", "")
    scheme = meta.get("scheme", "")
    rmean = rstd = math.nan
    with open(p, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise DecodeError(f"{p}: not a ledger (columns {reader.fieldnames})")
        for row in reader:
            kind = row["kind"]
            scheme = row["scheme"] or scheme
            if kind == "step":
                steps[int(row["step"]), int(row["actor"])] = (
                    float(row["bits_ideal"]), int(row["bits_wire"]), int(row["header_bytes"]))
            elif kind == "eval":
                evals.append(EvalRow(int(row["step"]), _f(row["return_mean"]), _f(row["return_std"]),
                                     _f(row["clone_mean"]), _f(row["clone_std"])))
            elif kind == "epoch":
                ok = row["lockstep_ok"]
                epochs.append(EpochRow(int(row["step"]), _f(row["kl_bits"]), _f(row["bc_loss"]),
                                       None if ok == "" else ok == "1"))
            elif kind == "baseline":
                rmean, rstd = _f(row["return_mean"]), _f(row["return_std"])
            else:
                raise DecodeError(f"{p}: unknown row kind {kind!r}")
    T = 1 + max(t for t, _ in steps) if steps else 0
    A = 1 + max(i for _, i in steps) if steps else 0
    led = RunLedger.empty(env, scheme, T, A, evals=evals, epochs=epochs,
                          random_mean=rmean, random_std=rstd)
    for (t, i), (bi, bw, hb) in steps.items():
        led.bits_ideal[t, i] = bi
        led.bits_wire[t, i] = bw
        led.header_bytes[t, i] = hb
    led.meta = {k: v for k, v in meta.items()
                if k not in ("schema", "env", "scheme", "total_steps", "n_actors")}
    return led
