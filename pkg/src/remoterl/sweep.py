"""Scheme x seed sweeps and the aggregated ``summary.csv``.

``summary.csv`` columns: env, scheme, n_seeds, n_failed, final_return
("mean(std)"), return_mean, return_std, clone_mean, clone_std, return_gap,
norm_return_gap_pct, score (0 = random policy, 100 = best scheme of the
sweep), bits_ideal_mean, bits_wire_mean, savings_ideal and savings_wire
(FR total of 32 bits per actor per step divided by the scheme's total).
"""

from __future__ import annotations

import csv
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from .codec.reward import RewardScheme
from .config import RunConfig, Scheme
from .ledger import RunLedger, read_ledger
from .report import final_stats

SUMMARY_COLUMNS = (
    "env", "scheme", "n_seeds", "n_failed", "final_return", "return_mean", "return_std",
    "clone_mean", "clone_std", "return_gap", "norm_return_gap_pct", "score",
    "bits_ideal_mean", "bits_wire_mean", "savings_ideal", "savings_wire",
)


def cell_dir(out_dir, scheme: str, seed: int) -> Path:
    return Path(out_dir) / scheme / f"seed{seed}"


def _run_cell(cfg: RunConfig, out: str):
    from .protocol import run_experiment

    try:
        led = run_experiment(cfg)
        led.write(out)
        return "ok", ""
    except Exception as exc:  # one failed cell must not stop the sweep
        return "failed", "".join(traceback.format_exception_only(type(exc), exc)).strip()


def fr_total_bits(total_steps: int, n_actors: int) -> int:
    return RewardScheme.FR.bits * total_steps * n_actors


def summarize(groups: dict[str, list[RunLedger]], failures: dict[str, int] | None = None) -> list[dict]:
    failures = failures or {}
    stats = {s: final_stats(runs) for s, runs in groups.items() if runs}
    if not stats:
        return []
    best = max(st["return_mean"] for st in stats.values())
    rows = []
    for scheme, st in stats.items():
        runs = groups[scheme]
        fr = fr_total_bits(runs[0].total_steps, runs[0].n_actors)
        span = best - st["random_mean"]
        rows.append({
            "env": runs[0].env,
            "scheme": scheme,
            "n_seeds": st["n_seeds"],
            "n_failed": failures.get(scheme, 0),
            "final_return": f"{st['return_mean']:.4f}({st['return_std']:.4f})",
            "return_mean": st["return_mean"],
            "return_std": st["return_std"],
            "clone_mean": st["clone_mean"],
            "clone_std": st["clone_std"],
            "return_gap": st["return_gap"],
            "norm_return_gap_pct": st["norm_return_gap_pct"],
            "score": 100.0 * (st["return_mean"] - st["random_mean"]) / span if span else math.nan,
            "bits_ideal_mean": st["bits_ideal_mean"],
            "bits_wire_mean": st["bits_wire_mean"],
            "savings_ideal": fr / st["bits_ideal_mean"] if st["bits_ideal_mean"] else math.inf,
            "savings_wire": fr / st["bits_wire_mean"] if st["bits_wire_mean"] else math.inf,
        })
    return rows


def write_summary(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def run_sweep(base: RunConfig, schemes: Sequence[str], seeds: Sequence[int], out_dir,
              workers: int = 1) -> list[dict]:
    """Run every (scheme, seed) cell, then write ``cells.csv`` and ``summary.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(s, seed, base.replace(scheme=Scheme(s), run_seed=seed,
                                    output_dir=str(cell_dir(out, s, seed))))
             for s in schemes for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, [c for _, _, c in cells],
                                    [c.output_dir for _, _, c in cells]))
    else:
        results = [_run_cell(c, c.output_dir) for _, _, c in cells]
    groups: dict[str, list[RunLedger]] = {s: [] for s in schemes}
    failures: dict[str, int] = {}
    with open(out / "cells.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scheme", "seed", "status", "error", "path"))
        for (s, seed, cfg), (status, err) in zip(cells, results):
            w.writerow((s, seed, status, err, cfg.output_dir))
            if status == "ok":
                groups[s].append(read_ledger(cfg.output_dir))
            else:
                failures[s] = failures.get(s, 0) + 1
    rows = summarize(groups, failures)
    write_summary(rows, out / "summary.csv")
    return rows
