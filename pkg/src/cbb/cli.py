"""Command-line entry point: ``cbb run|sweep|verify|hardness``."""
from __future__ import annotations

import argparse
import json
import sys

from cbb.baselines import hardness_analysis
from cbb.errors import CBBError
from cbb.harness import ExperimentConfig, parse_param, run_experiment, sweep


def _summary(results) -> None:
    for name, ms in results.items():
        print(
            f"{name}: regret(T)={ms.regret_mean()[-1]:.3f} "
            f"lp_skip={ms.rate_mean('lp_skip')[-1]:.4f} "
            f"skip={ms.rate_mean('skip')[-1]:.4f} "
            f"block={ms.rate_mean('block')[-1]:.4f}"
        )


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    _summary(run_experiment(cfg))
    return 0


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    name, values = parse_param(args.param)
    for value, results in sweep(cfg, name, values).items():
        print(f"--- {name}={value}")
        _summary(results)
    return 0


def cmd_verify(args) -> int:
    from cbb.checks import verify_suite

    results = verify_suite(args.level)
    for r in results:
        print(r.line())
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=2)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def cmd_hardness(args) -> int:
    rec = hardness_analysis(args.d, args.eps, args.R)
    print(json.dumps(rec.to_dict()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbb", description="Contextual blocking bandit simulations and checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", help="override output_dir from the config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="repeat an experiment over values of one instance parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, help="e.g. gap=0.4,0.6,0.8")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the property checks and print a report")
    p.add_argument("--level", choices=["fast", "full"], default="fast")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("hardness", help="evaluate the lower-bound instance family")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.set_defaults(func=cmd_hardness)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CBBError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
