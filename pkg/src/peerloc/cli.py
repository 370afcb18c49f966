"""Command-line interface: run / sweep / report / scenarios."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError
from .experiment import SWEEP_AXES, reaggregate, run_experiment, sweep
from .scenarios import BUNDLED

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peerloc",
        description="Collaborative relative localization simulation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and write a report")
    run_p.add_argument("--config", required=True, help="config path or bundled scenario name")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--format", choices=("csv", "json"), default="csv")

    sweep_p = sub.add_parser("sweep", help="run a scenario across one axis")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated axis values")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--out", default=None)
    sweep_p.add_argument("--format", choices=("csv", "json"), default="csv")

    rep_p = sub.add_parser("report", help="re-aggregate summaries from samples.csv")
    rep_p.add_argument("--out", required=True, help="run output directory")

    sub.add_parser("scenarios", help="list bundled scenario configs")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            report = run_experiment(args.config, seed=args.seed, out_dir=args.out,
                                    fmt=args.format)
            for method, s in sorted(report.summaries.items()):
                print(f"{report.scenario_id} {method}: "
                      f"geom p50={s.geom_p50:.3f} m p90={s.geom_p90:.3f} m | "
                      f"dpe p50={s.dpe_p50:.4f} p90={s.dpe_p90:.4f} (n={s.count})")
            print(f"protocol: delivery={report.protocol.delivery_rate:.3f} "
                  f"neighbor rate={report.protocol.neighbor_rate_mean_hz:.2f} Hz")
            return EXIT_OK
        if args.command == "sweep":
            values = [v for v in args.values.split(",") if v]
            reports = sweep(args.config, args.axis, values, seed=args.seed,
                            out_dir=args.out, fmt=args.format)
            for rep in reports:
                line = f"{rep.scenario_id}:"
                for method, s in sorted(rep.summaries.items()):
                    line += f" {method} p50={s.geom_p50:.3f}m"
                print(line)
            return EXIT_OK
        if args.command == "report":
            print(json.dumps(reaggregate(args.out), indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "scenarios":
            for name in sorted(BUNDLED):
                print(name)
            return EXIT_OK
        return EXIT_RUNTIME
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 -- CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
