"""Command line: ``remoterl run | sweep | report | selftest``.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, RemoteRLError, UsageError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _overrides(pairs) -> dict[str, str]:
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise ConfigError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def cmd_run(args) -> int:
    from .config import load_config
    from .protocol import run_experiment

    over = _overrides(args.set)
    if args.out:
        over["output_dir"] = args.out
    cfg = load_config(args.config, over)
    led = run_experiment(cfg)
    out = led.write(cfg.output_dir)
    last = led.evals[-1]
    print(f"{cfg.env} {cfg.scheme.value}: final return {last.return_mean:.4f}, "
          f"{led.total_bits():.1f} bits ({led.total_bits() / led.total_steps:.3f}/step) -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .config import Scheme, load_config
    from .sweep import run_sweep

    cfg = load_config(args.config, _overrides(args.set))
    schemes = _csv_list(args.schemes)
    for s in schemes:
        if s not in Scheme.__members__:
            raise ConfigError(f"--schemes: unknown scheme {s!r}")
    try:
        seeds = [int(s) for s in _csv_list(args.seeds)]
    except ValueError:
        raise ConfigError(f"--seeds: expected comma-separated integers, got {args.seeds!r}") from None
    rows = run_sweep(cfg, schemes, seeds, args.out, workers=args.workers)
    for r in rows:
        print(f"{r['scheme']:6s} return {r['final_return']}  savings x{r['savings_ideal']:.1f}"
              f"  failed {r['n_failed']}")
    print(f"summary -> {Path(args.out) / 'summary.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import make_report

    for p in make_report(args.ledgers, args.out):
        print(p)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="remoterl", description="Remote RL experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a config file")
    p.add_argument("config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a setting")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="run schemes x seeds and aggregate")
    p.add_argument("config")
    p.add_argument("--schemes", default="GRASP,ASC,FR")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", default="runs/sweep")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="plots and a markdown summary from ledgers")
    p.add_argument("ledgers", nargs="+", help="run directories or ledger.csv files")
    p.add_argument("--out", default="runs/report")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("selftest", help="codec and gradient property checks")
    p.set_defaults(fn=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RemoteRLError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
