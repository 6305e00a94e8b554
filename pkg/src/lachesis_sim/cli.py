"""Command-line front end.

Subcommands: ``run`` a scenario, ``verify`` chain transcripts against
each other, ``export-dot`` an event log, ``bench`` repeated runs.

Exit codes: 0 success, 1 usage or configuration error, 2 consistency
violation (mid-run invariant breach or divergent transcripts).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .simnet import (NS, InvalidScenario, Metrics, Scenario, UnknownNode,
                     run as run_scenario)
from . import viz

DEFAULT_OUT = "out"


def _out_dir(args) -> str:
    if args.out:
        return args.out
    return os.environ.get("LACHESIS_SIM_OUT", DEFAULT_OUT)


def _parse_fault(text: str) -> dict:
    # fork:node=4,at=3.0  offline:node=1,from=2,to=8  latency:nodes=1|2,lo=0.3,hi=0.7
    kind, _, rest = text.partition(":")
    kind = {"latency": "extra_latency"}.get(kind, kind)
    fault: dict = {"kind": kind}
    for part in filter(None, rest.split(",")):
        key, _, value = part.partition("=")
        if key == "nodes":
            fault[key] = [int(v) for v in value.split("|")]
        elif key == "node":
            fault[key] = int(value)
        else:  # seconds on the command line, nanoseconds inside
            fault[key] = int(float(value) * NS)
    return fault


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if args.seed is not None:
        sc.seed = args.seed
    if args.nodes is not None:
        sc.stakes = [1] * args.nodes
    if args.stakes is not None:
        sc.stakes = [int(s) for s in args.stakes.split(",")]
    if args.duration is not None:
        sc.duration = int(args.duration * NS)
    if args.emission_interval is not None:
        sc.emission_interval = int(args.emission_interval * NS / 1000)
    if args.latency is not None:
        base, _, jitter = args.latency.partition(",")
        sc.latency_base = int(float(base) * NS / 1000)
        sc.latency_jitter = int(float(jitter or 0) * NS / 1000)
    if args.peer_strategy is not None:
        sc.peer_strategy = args.peer_strategy
    if args.tx_rate is not None:
        sc.tx_rate = args.tx_rate
    for fault in args.fault or []:
        sc.faults.append(_parse_fault(fault))
    return sc


def _load_scenario(args) -> Scenario:
    sc = Scenario.from_file(args.scenario) if args.scenario else Scenario()
    return _apply_overrides(sc, args)


def cmd_run(args) -> int:
    try:
        sc = _load_scenario(args)
        sc.validate()
    except (InvalidScenario, UnknownNode, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = _out_dir(args)
    result = run_scenario(sc, out_dir=out_dir)
    m = result.metrics
    print(f"{sc.name}: blocks={m.blocks_finalized} txs={m.transactions_executed} "
          f"events={m.events_emitted} avg_ttf={m.avg_ttf:.3f}s avg_tps={m.avg_tps:.1f} "
          f"-> {out_dir}")
    if result.violations:
        for v in result.violations:
            print(f"violation: {v}", file=sys.stderr)
        return 2
    return 0


def cmd_verify(args) -> int:
    transcripts = []
    for path in args.transcripts:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                transcripts.append((path, fh.read().splitlines()))
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    if len(transcripts) < 2:
        print("error: need at least two transcripts", file=sys.stderr)
        return 1
    for i, (pa, la) in enumerate(transcripts):
        for pb, lb in transcripts[i + 1:]:
            for idx, (x, y) in enumerate(zip(la, lb)):
                if x != y:
                    print(f"divergence: {pa} vs {pb} at line {idx}")
                    return 2
    print(f"consistent: {len(transcripts)} transcripts agree on shared prefixes")
    return 0


def cmd_export_dot(args) -> int:
    try:
        with open(args.events, "r", encoding="utf-8") as fh:
            lines = [line for line in fh.read().splitlines() if line]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    atropos = set()
    for path in args.chain or []:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    rec = json.loads(line)
                    if "atropos" in rec:
                        atropos.add(rec["atropos"])
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    try:
        text = viz.dot_from_log(lines, atropos)
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"error: malformed event log: {exc}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_bench(args) -> int:
    try:
        sc = _load_scenario(args)
        sc.validate()
    except (InvalidScenario, UnknownNode, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = _out_dir(args)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for i in range(args.repeat):
        run_sc = Scenario.from_dict(sc.to_dict())
        run_sc.seed = sc.seed + i
        run_sc.name = f"{sc.name}-{i}"
        result = run_scenario(run_sc)
        rows.append(result.metrics.csv_row(run_sc))
        m = result.metrics
        print(f"{run_sc.name}: blocks={m.blocks_finalized} "
              f"avg_ttf={m.avg_ttf:.3f}s avg_tps={m.avg_tps:.1f}")
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8",
              newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(Metrics.CSV_FIELDS)
        w.writerows(rows)
    return 0


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--out", help="output directory (or $LACHESIS_SIM_OUT)")
    p.add_argument("--seed", type=int)
    p.add_argument("--nodes", type=int, help="unit-stake node count")
    p.add_argument("--stakes", help="comma-separated stakes, e.g. 3,1,1,1")
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--emission-interval", type=float, help="milliseconds")
    p.add_argument("--latency", help="base[,jitter] milliseconds")
    p.add_argument("--peer-strategy")
    p.add_argument("--tx-rate", type=float, help="transactions per second")
    p.add_argument("--fault", action="append",
                   help="fork:node=N,at=S | offline:node=N,from=S,to=S "
                        "| latency:nodes=N|M,lo=S,hi=S (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lachesis-sim",
        description="Deterministic DAG-consensus network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario")
    _add_run_options(p_run)
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="cross-check chain transcripts")
    p_verify.add_argument("transcripts", nargs="+")
    p_verify.set_defaults(func=cmd_verify)

    p_dot = sub.add_parser("export-dot", help="render an event log as DOT")
    p_dot.add_argument("events", help="events.jsonl path")
    p_dot.add_argument("--chain", action="append",
                       help="chain transcript(s) for final-root marks")
    p_dot.add_argument("--out", help="output file (default stdout)")
    p_dot.set_defaults(func=cmd_export_dot)

    p_bench = sub.add_parser("bench", help="repeat a scenario over seeds")
    _add_run_options(p_bench)
    p_bench.add_argument("--repeat", type=int, default=5)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
