"""Static reports: smoothed training curves as SVG plus a markdown summary.

Curves are smoothed with a normalized Gaussian kernel whose standard deviation
is 2% of the run length, then averaged over seeds (mean line, one-std band).
Final numbers in the markdown come from the raw, unsmoothed ledgers.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import UsageError
from .ledger import RunLedger, read_ledger

SMOOTH_FRACTION = 0.02
SCHEME_ORDER = ("GRASP", "ASC", "FR", "QR16", "QR8", "QR4")


def gaussian_smooth(x, y, sigma: float, at=None) -> np.ndarray:
    """Kernel-weighted average of ``y`` (sampled at ``x``) evaluated at ``at``.

    Weights are renormalized at every output point, so a constant series comes
    back unchanged and the edges are not pulled toward zero.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    at = x if at is None else np.asarray(at, dtype=np.float64)
    if sigma <= 0 or x.size == 1:
        return np.interp(at, x, y) if x.size > 1 else np.full(at.shape, y[0])
    w = np.exp(-0.5 * ((at[:, None] - x[None, :]) / sigma) ** 2)
    return (w @ y) / w.sum(axis=1)


def group_ledgers(ledgers: Sequence[RunLedger]) -> dict[str, list[RunLedger]]:
    if not ledgers:
        raise UsageError("report needs at least one ledger")
    envs = {led.env for led in ledgers}
    if len(envs) != 1:
        raise UsageError(f"ledgers come from different environments: {sorted(envs)}")
    groups: dict[str, list[RunLedger]] = defaultdict(list)
    for led in ledgers:
        groups[led.scheme].append(led)
    steps = {led.total_steps for led in ledgers}
    if len(steps) != 1:
        raise UsageError(f"ledgers have different lengths: {sorted(steps)}")
    return dict(sorted(groups.items(), key=lambda kv: _scheme_rank(kv[0])))


def _scheme_rank(s: str) -> int:
    return SCHEME_ORDER.index(s) if s in SCHEME_ORDER else len(SCHEME_ORDER)


def clone_gap(controller: float, clone: float, random: float) -> tuple[float, float]:
    """Return gap and normalized return gap (percent of controller - random)."""
    gap = controller - clone
    span = controller - random
    return gap, (100.0 * gap / span if span != 0 else math.nan)


def final_stats(runs: Sequence[RunLedger]) -> dict[str, float]:
    """Across-seed statistics of the last evaluation of each run (unsmoothed)."""
    ret = np.array([r.final_return for r in runs])
    clone = np.array([r.final_clone_return for r in runs])
    rnd = float(np.mean([r.random_mean for r in runs]))
    total = np.array([r.total_bits(ideal=True) for r in runs])
    wire = np.array([r.total_bits(ideal=False) for r in runs])
    gap, norm_gap = clone_gap(float(ret.mean()), float(clone.mean()), rnd)
    return {
        "n_seeds": len(runs),
        "return_mean": float(ret.mean()),
        "return_std": float(ret.std()),
        "clone_mean": float(clone.mean()),
        "clone_std": float(clone.std()),
        "random_mean": rnd,
        "return_gap": gap,
        "norm_return_gap_pct": norm_gap,
        "bits_ideal_mean": float(total.mean()),
        "bits_wire_mean": float(wire.mean()),
        "bits_per_step": float(total.mean()) / runs[0].total_steps,
    }


def curves(runs: Sequence[RunLedger], batch_size: int | None = None) -> dict[str, tuple]:
    """Smoothed per-seed series, reduced to ``(x, mean, std)`` per panel."""
    T = runs[0].total_steps
    sigma = SMOOTH_FRACTION * T
    x_eval = runs[0].eval_steps.astype(np.float64)
    out = {}
    series = {
        "return": [r.eval_array("return_mean") for r in runs],
        "clone return": [r.eval_array("clone_mean") for r in runs],
    }
    series["return gap"] = [a - b for a, b in zip(series["return"], series["clone return"])]
    for name, ys in series.items():
        sm = np.stack([gaussian_smooth(x_eval, y, sigma) for y in ys])
        out[name] = (x_eval, sm.mean(axis=0), sm.std(axis=0))
    # bits are averaged per epoch first; the kernel then runs on the epoch grid
    bs = batch_size or int(runs[0].meta.get("config", {}).get("batch_size", max(1, T // 200)))
    xb = (np.arange(T // bs) + 0.5) * bs
    sm = np.stack([gaussian_smooth(xb, r.epoch_mean_bits(bs), sigma) for r in runs])
    out["bits/step"] = (xb, sm.mean(axis=0), sm.std(axis=0))
    return out


def plot_env(groups: dict[str, list[RunLedger]], path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    env = next(iter(groups.values()))[0].env
    fig, axes = plt.subplots(1, 4, figsize=(16, 3.6))
    panels = ("return", "clone return", "return gap", "bits/step")
    for scheme, runs in groups.items():
        c = curves(runs)
        for ax, name in zip(axes, panels):
            if name in ("clone return", "return gap") and not np.isfinite(c[name][1]).any():
                continue
            x, m, s = c[name]
            ax.plot(x, m, label=scheme, lw=1.5)
            ax.fill_between(x, m - s, m + s, alpha=0.2)
    for ax, name in zip(axes, panels):
        ax.set_title(name)
        ax.set_xlabel("environment steps")
    axes[3].set_yscale("log")
    axes[0].legend(fontsize=8)
    fig.suptitle(env)
    fig.tight_layout()
    p = Path(path)
    # fixed metadata and id salt keep the svg byte-stable across reruns
    with matplotlib.rc_context({"svg.hashsalt": "remoterl"}):
        fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    return p


def markdown_summary(groups: dict[str, list[RunLedger]]) -> str:
    env = next(iter(groups.values()))[0].env
    lines = [f"# {env}", "",
             "| scheme | seeds | final return | clone return | norm. gap (%) | bits/step |",
             "|---|---|---|---|---|---|"]
    for scheme, runs in groups.items():
        s = final_stats(runs)
        clone = "n/a" if math.isnan(s["clone_mean"]) else f"{s['clone_mean']:.4f} ({s['clone_std']:.4f})"
        gap = "n/a" if math.isnan(s["norm_return_gap_pct"]) else f"{s['norm_return_gap_pct']:.2f}"
        lines.append(f"| {scheme} | {s['n_seeds']} | {s['return_mean']:.4f} ({s['return_std']:.4f}) "
                     f"| {clone} | {gap} | {s['bits_per_step']:.3f} |")
    return "\n".join(lines) + "\n"


def make_report(paths: Sequence, out_dir) -> list[Path]:
    ledgers = [read_ledger(p) for p in paths]
    groups = group_ledgers(ledgers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = ledgers[0].env
    svg = plot_env(groups, out / f"{env}.svg")
    md = out / "report.md"
    md.write_text(markdown_summary(groups))
    return [svg, md]
