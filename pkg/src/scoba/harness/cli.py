"""Command-line entry point.

    scoba run CONFIG [--out metrics.csv]
    scoba sweep SWEEP [--out report.csv]
    scoba timing [--domain conveyor|drone|both] [--out timing.csv]
    scoba oracle-check [--out table.csv]

Exit status is 0 on success, 2 on configuration errors and 3 on input or
resource errors.
"""

from __future__ import annotations

import argparse
import sys

from scoba.core import InputError, ResourceError
from scoba.harness.config import ConfigError, TrialConfig, load_config, load_sweep
from scoba.harness.runner import SWEEP_COLUMNS, run_sweep, run_trials, summarize, write_metrics, write_rows
from scoba.harness.timing import TIMING_COLUMNS, timing_report

ORACLE_SPEEDS = (0.04, 0.07, 0.1)
ORACLE_PROBS = (0.5, 0.75, 1.0)


def oracle_configs(seed: int = 0, trials: int = 100) -> list:
    """Perfect-grasp grid of belt speed and arrival probability."""
    out = []
    for v in ORACLE_SPEEDS:
        for p in ORACLE_PROBS:
            cfg = TrialConfig("conveyor", "scoba", trials=trials, seed=seed, grasp_prob=1.0, speed=v, new_object_prob=p)
            out.append(cfg.replace(label={"param": "speed,new_object_prob", "value": f"{v},{p}"}))
    return out


def _overrides(args) -> dict:
    return {"seed": args.seed, "trials": args.trials}


def _emit(rows, columns, out) -> None:
    if out:
        write_rows(rows, out, columns)
    else:
        import csv

        w = csv.DictWriter(sys.stdout, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def cmd_run(args) -> None:
    cfg = load_config(args.config, **_overrides(args))
    metrics = run_trials(cfg, threads=args.threads)
    if args.out:
        write_metrics(metrics, args.out)
    s = summarize(metrics)
    print(f"{cfg.domain} {cfg.planner}: trials={s['trials']} mean_fraction={s['mean_fraction']:.6g} stderr={s['stderr']:.3g}")


def cmd_sweep(args) -> None:
    spec = load_sweep(args.sweep, **_overrides(args))
    rows = run_sweep(spec.configs(), threads=args.threads)
    _emit(rows, SWEEP_COLUMNS, args.out)


def cmd_timing(args) -> None:
    reps = args.trials if args.trials is not None else 10
    rows = timing_report(args.domain, reps=reps, seed=args.seed or 0)
    _emit(rows, TIMING_COLUMNS, args.out)


def cmd_oracle(args) -> None:
    trials = args.trials if args.trials is not None else 100
    rows = run_sweep(oracle_configs(args.seed or 0, trials), threads=args.threads)
    _emit(rows, SWEEP_COLUMNS, args.out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base RNG seed")
    common.add_argument("--trials", type=int, default=None, help="trials per config (repetitions for timing)")
    common.add_argument("--out", default=None, help="CSV output path (stdout when omitted)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for trials")

    ap = argparse.ArgumentParser(prog="scoba", description="Stochastic conflict-based task allocation experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run one config file")
    p.add_argument("config")
    p.set_defaults(fn=cmd_run)
    p = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    p.add_argument("sweep")
    p.set_defaults(fn=cmd_sweep)
    p = sub.add_parser("timing", parents=[common], help="planner wall-clock report")
    p.add_argument("--domain", choices=("conveyor", "drone", "both"), default="both")
    p.set_defaults(fn=cmd_timing)
    p = sub.add_parser("oracle-check", parents=[common], help="perfect-grasp miss fractions on the conveyor")
    p.set_defaults(fn=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InputError, ResourceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
