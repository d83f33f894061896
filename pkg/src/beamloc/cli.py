"""Command-line front end: optimize, run, sweep, and eval subcommands.

Logs go to stderr; data goes to files under the configured output directory.
Exit codes: 0 success, 2 configuration error, 3 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .experiment import (ConfigError, load_config, run_eval, run_optimize,
                         run_pipeline, run_sweep)
from .placement import format_ids


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamloc",
        description="Beam-tracing antenna placement and device-free localization experiments")
    parser.add_argument("--version", action="version", version=f"beamloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--jobs", type=int, default=None, help="worker count override")
        p.add_argument("--out", default=None, help="output directory override")

    p_opt = sub.add_parser("optimize", help="rank antenna placements by the beam metric")
    common(p_opt)

    p_run = sub.add_parser("run", help="dataset, training, and evaluation for one placement")
    common(p_run)
    p_run.add_argument("--ids", default=None,
                       help="explicit candidate ids, e.g. 1,2,5,9 (default: rank-1 pattern)")

    p_sweep = sub.add_parser("sweep", help="train/evaluate over a rank subset of placements")
    common(p_sweep)
    p_sweep.add_argument("--ranks", default=None,
                         help="rank selector: all, top:K, bottom:K, stride:N (comma-separated)")

    p_eval = sub.add_parser("eval", help="re-score a saved model on a new test set")
    common(p_eval)
    p_eval.add_argument("--model", required=True, help="saved localizer model JSON")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    over: dict = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.out is not None:
        over["out"] = args.out
    if getattr(args, "ranks", None) is not None:
        over["eval"] = {"ranks": args.ranks}
    if getattr(args, "ids", None) is not None:
        ids = [int(v) for v in args.ids.split(",") if v.strip()]
        over["placement"] = {"ids": ids}
    return over


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 2
    try:
        if args.command == "optimize":
            ranking = run_optimize(config)
            _log(f"ranked {len(ranking)} placement patterns "
                 f"-> {config.out / 'ranking.csv'}")
            _log(f"{'rank':>4} {'b':>5} {'ids':>12} {'s1':>4} {'s2':>8} {'s':>9}")
            for rank, res in enumerate(ranking[:10], start=1):
                _log(f"{rank:>4} {res.pattern.b:>5} {format_ids(res.pattern.ids):>12} "
                     f"{res.s1:>4} {res.s2:>8.3f} {res.s:>9.3f}")
        elif args.command == "run":
            report, model_path = run_pipeline(config)
            _log(f"model -> {model_path}")
            _log(f"Pe={report.average_detection:.4f} "
                 f"mean_err={report.mean_error:.4f} m "
                 f"({len(report.error_distances)} test samples)")
        elif args.command == "sweep":
            result = run_sweep(config)
            _log(f"swept {len(result.rows)} patterns -> {config.out / 'sweep.csv'}")
            _log(f"spearman(-s, Pe)={result.spearman:.4f} "
                 f"top_decile_Pe={result.top_decile_pe:.4f} "
                 f"bottom_decile_Pe={result.bottom_decile_pe:.4f}")
        elif args.command == "eval":
            report = run_eval(config, args.model)
            _log(f"Pe={report.average_detection:.4f} "
                 f"mean_err={report.mean_error:.4f} m")
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 2
    except Exception as exc:  # runtime/numerical failure
        _log(f"error ({args.command}): {exc}")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
