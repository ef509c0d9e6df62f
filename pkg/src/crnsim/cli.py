"""Command line: ``crnsim run|sweep|game|validate``.

Exit codes: 0 success, 1 configuration fault, 2 an ``--assert`` threshold
was not met.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .core import ConfigurationError
from .harness import ExperimentConfig, emit, run, sweep
from .topology import InstanceParseError, TopologyError, load_instance, validate_instance


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file whose keys mirror ExperimentConfig")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output path (default: stdout summary only)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--assert", dest="assert_rate", type=float, nargs="?", const=0.95, default=None,
                   metavar="RATE", help="exit 2 if the success rate is below RATE (default 0.95)")


def _build_config(args, **extra) -> ExperimentConfig:
    d = {}
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        d = dataclasses.asdict(cfg)
    d.update({k: v for k, v in extra.items() if v is not None})
    for key, val in (("master_seed", args.seed), ("trials", args.trials), ("workers", args.workers),
                     ("out", args.out), ("format", args.format)):
        if val is not None:
            d[key] = val
    if "scenario" not in d:
        raise ConfigurationError("no scenario: pass --config or a scenario flag")
    return ExperimentConfig.from_dict(d)


def _check(rate, threshold) -> int:
    if threshold is not None and (rate is None or rate < threshold):
        print(f"FAIL: success rate {rate} below {threshold}", file=sys.stderr)
        return 2
    return 0


def _finish(cfg: ExperimentConfig, out, assert_rate) -> int:
    if cfg.out:
        emit(out.records, cfg.format, cfg.out, cfg, out.summary)
    print(json.dumps(out.summary, sort_keys=True))
    return _check(out.summary["success_rate"], assert_rate)


def cmd_run(args) -> int:
    cfg = _build_config(args)
    return _finish(cfg, run(cfg), args.assert_rate)


def cmd_game(args) -> int:
    scenario = {"bipartite": "game-bipartite", "complete": "game-complete",
                "reduction": "game-reduction"}[args.game]
    cfg = _build_config(args, scenario=scenario, c=args.c, k=args.k, player=args.player,
                        max_rounds=args.max_rounds)
    return _finish(cfg, run(cfg), args.assert_rate)


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    values = [int(x) for x in args.values.split(",")]
    res = sweep(cfg, args.axis, values)
    rows = [{"value": p["value"], **p["summary"]} for p in res["points"]]
    report = {"axis": res["axis"], "points": rows, "skipped": res["skipped"], "fit": res["fit"],
              "fit_refused": res["fit_refused"], "config": cfg.provenance()}
    text = json.dumps(report, sort_keys=True, indent=1)
    if cfg.out:
        with open(cfg.out, "w") as f:
            f.write(text + "\n")
    print(text)
    code = 0
    if args.assert_rate is not None:
        code = max(_check(r["success_rate"], args.assert_rate) for r in rows) if rows else 2
    if args.slope_range:
        lo, hi = (float(x) for x in args.slope_range.split(","))
        if res["fit"] is None or not lo <= res["fit"]["slope"] <= hi:
            print(f"FAIL: slope outside [{lo}, {hi}]", file=sys.stderr)
            code = 2
    return code


def cmd_validate(args) -> int:
    net = load_instance(args.instance)
    problems = validate_instance(net)
    for p in problems:
        print(p)
    if not problems:
        print(f"ok: {net.params}")
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crnsim", description="Cognitive radio network discovery and broadcast simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one scenario")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a scenario over values of one parameter")
    _common(p)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma separated, e.g. 4,8,16,32")
    p.add_argument("--slope-range", help="lo,hi: exit 2 if the fitted log-log slope falls outside")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("game", help="play a hitting game")
    _common(p)
    p.add_argument("--game", choices=("bipartite", "complete", "reduction"), default="bipartite")
    p.add_argument("--c", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--player", choices=("uniform", "fresh-pair", "reduction"))
    p.add_argument("--max-rounds", type=int)
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("instance")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, TopologyError, InstanceParseError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
