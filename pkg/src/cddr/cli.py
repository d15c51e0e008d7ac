"""Command-line entry point: ``cddr <subcommand> --config <path-or-name>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments
from .config import ConfigError, builtin_configs, load_config
from .reach import UnattainableGuarantee
from .systems import write_csv

EXIT_CONFIG = 2
EXIT_UNATTAINABLE = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cddr", description="Conformalized data-driven reachability experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v progress, -vv p-value traces")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "simulate the trajectory pool and write it as CSV"),
        ("run", "coverage / volume / Hausdorff table for every configured method"),
        ("pac-validate", "score coverage over repeated random calibration splits"),
        ("score-study", "compare isotropic, per-dimension and normalized scores"),
        ("plot-data", "2-D projection vertex lists for plotting"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help=f"config path or built-in name ({', '.join(builtin_configs())})")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--full", action="store_true", help="apply the config's full-scale overrides")
        if name == "run":
            p.add_argument("--allow-unattainable", action="store_true",
                           help="report uncertifiable methods as rows instead of aborting")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = load_config(args.config, full=args.full, seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        if args.command == "simulate":
            out.mkdir(parents=True, exist_ok=True)
            write_csv(experiments.simulate_pool(config, config.K), out / "trajectories.csv")
        elif args.command == "run":
            runs = experiments.run_experiment(config, out, allow_unattainable=args.allow_unattainable)
            for r in runs:
                if r.report is None:
                    print(f"{r.method:12s} unattainable (n={r.calibration.n_used}, n_min={r.n_min})")
                else:
                    print(f"{r.method:12s} coverage {100 * r.report.trajectory_coverage:6.2f}%  "
                          f"volume {r.report.final_volume:.4g}  d_H {r.report.hausdorff_final:.4f}")
        elif args.command == "pac-validate":
            res = experiments.run_pac_validation(config, out)
            for row in res["summary"]:
                print(f"{row['method']:12s} mean {row['mean_coverage_pct']:6.2f}%  std {row['std_pct']:.2f}  "
                      f"min {row['min_pct']:6.2f}%  fail {row['fail_pct']:5.1f}%")
        elif args.command == "score-study":
            for row in experiments.run_score_study(config, out):
                cov = "-" if row["coverage_pct"] is None else f"{row['coverage_pct']:6.2f}%"
                vol = "-" if row["final_volume"] is None else f"{row['final_volume']:.4g}"
                print(f"{row['noise']:14s} {row['variant']:12s} coverage {cov}  volume {vol}  n_min {row['n_min']}")
        elif args.command == "plot-data":
            experiments.plot_data(config, out)
    except UnattainableGuarantee as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNATTAINABLE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
