"""Command-line entry point: ``nsbandit {run,sweep,compare,verify} --config FILE``.

Exit codes: 0 success, 1 runtime failure (including a failed verify check),
2 configuration error.  Flags given on the command line override the values
in the config file.
"""
from __future__ import annotations

import argparse
import sys
import traceback

import yaml

from .config import KEYS, config_from_dict, load_config
from .errors import ConfigError
from .runner import ALGORITHMS

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _parse_values(text: str) -> list:
    items = [s.strip() for s in text.split(",") if s.strip()]
    out = []
    for s in items:
        try:
            v = float(s)
        except ValueError:
            raise ConfigError(f"values: not a number: {s!r}") from None
        out.append(int(v) if v.is_integer() and "." not in s and "e" not in s.lower() else v)
    return out


def _parse_set(pairs) -> dict:
    out = {}
    for p in pairs or ():
        key, sep, raw = p.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {p!r}")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = yaml.safe_load(raw)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsbandit", description="Non-stationary linear bandit experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, outputs=True):
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (repeatable)")
        if outputs:
            p.add_argument("--seed", type=int, help="master seed (else the config seed, else NSBANDIT_SEED, else 0)")
            p.add_argument("--seeds", type=int, help="number of seeds to run")
            p.add_argument("--out", help="output directory")
            p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("-v", "--verbose", action="count", default=0)
        p.add_argument("-q", "--quiet", action="store_true")

    common(sub.add_parser("run", help="run all seeds of one configuration"))
    p = sub.add_parser("sweep", help="run one configuration over a list of T, b or delta values")
    common(p)
    p.add_argument("--axis", required=True, help="T, b or delta")
    p.add_argument("--values", required=True, help="comma separated list, e.g. 256,512")
    p = sub.add_parser("compare", help="run several algorithms on identical environments")
    common(p)
    p.add_argument("--algorithms", nargs="+", required=True, help=f"any of {', '.join(ALGORITHMS)}")
    common(sub.add_parser("verify", help="run the oracle-equivalence and invariant checks"), outputs=False)
    return parser


def _load(args):
    cfg = load_config(args.config)
    overrides = _parse_set(args.set)
    for key in ("seed", "out", "workers"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "seeds", None) is not None:
        overrides["seeds"] = args.seeds
    if args.quiet:
        overrides["verbosity"] = -1
    elif args.verbose:
        overrides["verbosity"] = args.verbose
    if overrides:
        data = {k: getattr(cfg, k) for k in KEYS}
        data.update(overrides)
        cfg = config_from_dict(data)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = _load(args)
        log = (lambda *a: None) if cfg.verbosity < 0 else print
        if args.command == "verify":
            from .verify import format_table, run_checks

            results = run_checks(cfg)
            print(format_table(results))
            return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME

        from .experiment import cmd_compare, cmd_run, cmd_sweep

        if args.command == "run":
            cmd_run(cfg, log=log)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.axis, _parse_values(args.values), log=log)
        else:
            cmd_compare(cfg, args.algorithms, log=log)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        if "cfg" in locals() and cfg.verbosity >= 2:
            traceback.print_exc()
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
