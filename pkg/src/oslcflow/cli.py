"""Command-line entry point: ``oslcflow <subcommand> <config> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import ConfigError, ScenarioConfig, run_scenario

SUBCOMMANDS = {
    "oslc-check": "oslc-check",
    "flow": "flow",
    "backward": "backward",
    "forward": "forward",
    "pairing": "pairing",
    "stability": "stability",
    "nonuniqueness": "nonuniqueness",
}
DEMOS = {"sgn2d": "sgn2d-reference"}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oslcflow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, metavar="NX", help="nodes per axis")
    common.add_argument("--eps0", type=float, help="first mollification width of the schedule")
    common.add_argument("--tol", type=float, help="Cauchy tolerance of the eps schedule")
    common.add_argument("--out", type=Path, metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="seed of the OSLC pair sampler")
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, parents=[common], help=f"run the {name} stage of a scenario")
        s.add_argument("config", help="scenario JSON file or shipped scenario name")
    s = sub.add_parser("demo", parents=[common], help="run a shipped demonstration scenario")
    s.add_argument("name", choices=sorted(DEMOS))
    return p


def _apply_overrides(cfg: ScenarioConfig, args) -> None:
    if args.grid is not None:
        cfg.grid = {**cfg.grid, "nx": args.grid}
    if args.eps0 is not None:
        cfg.flow = {**cfg.flow, "eps0": args.eps0}
    if args.tol is not None:
        cfg.flow = {k: v for k, v in cfg.flow.items() if k != "tol_h"} | {"tol": args.tol}
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate()


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "demo":
        source, stage = DEMOS[args.name], "all"
    else:
        source, stage = args.config, SUBCOMMANDS[args.command]
    try:
        cfg = ScenarioConfig.load(source)
        _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    res = run_scenario(cfg, stage, out_dir=args.out)
    for name, a in sorted(res.assertions.items()):
        print(f"{'PASS' if a['passed'] else 'FAIL'} {name}: value={a['value']} limit={a['limit']}")
    if res.message:
        print(res.message, file=sys.stderr if res.exit_code else sys.stdout)
    if res.exit_code != 2:
        summary = {k: res.values[k] for k in sorted(res.values) if k in ("eps_used", "pairing_drift")}
        if summary:
            print(json.dumps(summary, sort_keys=True, default=str))
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
