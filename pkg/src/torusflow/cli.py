"""Command line entry point ``torusflow``."""

from __future__ import annotations

import argparse
import json
import sys

from .config import KINDS, load_config, resolve
from .errors import ConfigurationError, TorusflowError


def _kappa_list(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad kappa sweep {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("kappa values must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="torusflow", description="Forced mean curvature flow experiments in flat tori.")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", help="JSON config; defaults are used for anything missing")
        p.add_argument("--out", help="run directory (default runs/<kind>-<config digest>)")
        p.add_argument("--seed", type=int)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--kappa", type=float)
        g.add_argument("--kappa-sweep", type=_kappa_list, metavar="A,B,C")
    v = sub.add_parser("validate", help="check a config against the schema and print the resolved form")
    v.add_argument("config")
    v.add_argument("--quiet", action="store_true")
    return ap


def _config_for(args) -> dict:
    if args.config:
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{args.config}: not valid JSON ({exc})") from exc
        if doc.get("kind", args.command) != args.command:
            raise ConfigurationError(f"config kind {doc.get('kind')!r} does not match command {args.command!r}")
    else:
        doc = {}
    doc["kind"] = args.command
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.kappa is not None:
        doc["kappas"] = [args.kappa]
        doc["kappa"] = args.kappa
    if args.kappa_sweep is not None:
        doc["kappas"] = args.kappa_sweep
        doc.pop("kappa", None)
    if args.out is not None:
        doc["output"] = args.out
    return resolve(doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            resolved = load_config(args.config)
        except (ConfigurationError, OSError) as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return 2
        if not args.quiet:
            print(json.dumps(resolved, indent=2, sort_keys=True))
        return 0
    from .runner import run_experiment

    try:
        cfg = _config_for(args)
    except (ConfigurationError, OSError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 2
    try:
        man = run_experiment(cfg)
    except TorusflowError as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for name, c in sorted(man.checks.items()):
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}: {c['value']} (threshold {c['threshold']})")
    print(f"status {man.status}; {len(man.files)} files written")
    return 0 if man.passed else 1


if __name__ == "__main__":
    sys.exit(main())
