"""Command line entry point: ``brwlab <experiment> [flags]`` or ``brwlab run config.json``.

Exit codes: 0 success, 2 invalid configuration, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from .errors import DomainError, UnsupportedRegimeError, InfiniteExpectationError
from .experiments import (DEFAULT_OUT, DEFAULT_REPLICAS, DEFAULT_SEED, Experiment,
                          ExperimentConfig, run)

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 2, 3

_CONFIG_ERRORS = (DomainError, UnsupportedRegimeError, InfiniteExpectationError, TypeError,
                  KeyError, json.JSONDecodeError, FileNotFoundError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(s):
    return [float(x) for x in s.split(",") if x]


def _ints(s):
    return [int(float(x)) for x in s.split(",") if x]


def _add_common(p):
    p.add_argument("--config", help="JSON config; flags below override its fields")
    p.add_argument("--lam", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--seed", type=int, default=None, help=f"default {DEFAULT_SEED}")
    p.add_argument("--replicas", type=int, default=None, help=f"default {DEFAULT_REPLICAS}")
    p.add_argument("--out", default=None, help=f"output directory (default {DEFAULT_OUT})")
    p.add_argument("--t-grid", type=_floats, help="comma separated ascending times")
    p.add_argument("--caps", type=_ints, help="comma separated population caps")
    p.add_argument("--t-max", type=float, help="cap-scan horizon")
    p.add_argument("--population-cap", type=int)
    p.add_argument("--event-cap", type=int)
    p.add_argument("--start", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--corridor-path", choices=["constant", "optimal"])
    p.add_argument("--method", choices=["front", "exact"])
    p.add_argument("--theta-family")
    p.add_argument("--theta-param", type=float)
    p.add_argument("--theta-T", type=float)


def build_parser():
    parser = _Parser(prog="brwlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run a JSON experiment config")
    r.add_argument("config")
    r.add_argument("--out")
    for exp in Experiment:
        _add_common(sub.add_parser(exp.value.replace("_", "-")))
    return parser


def config_from_args(args) -> ExperimentConfig:
    if args.command == "run":
        cfg = ExperimentConfig.from_json(args.config)
        if args.out:
            cfg.out = args.out
        return cfg
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    base["experiment"] = args.command.replace("-", "_")
    model = dict(base.get("model") or {"lam": 1.0, "beta": 1.0, "p": 0.0})
    for k in ("lam", "beta", "p"):
        v = getattr(args, k)
        if v is not None:
            model[k] = v
    base["model"] = model
    for key in ("seed", "replicas", "out", "t_grid", "caps", "t_max", "population_cap",
                "event_cap", "start", "delta", "corridor_path", "method"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.theta_family is not None:
        base["schedule"] = {"family": args.theta_family, "param": args.theta_param,
                            "T": args.theta_T}
    return ExperimentConfig.from_dict(base)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except _CONFIG_ERRORS as exc:
        print(f"brwlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        csv_path, json_path = run(cfg)
    except (DomainError, UnsupportedRegimeError, InfiniteExpectationError) as exc:
        print(f"brwlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL
    print(csv_path)
    print(json_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
