"""Command line: ``agc validate | run | analyze | classify``."""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

from . import analysis
from .config import chemistry_from_trace, load_chemistry, run_chemistry
from .errors import AgcError, ParseError, ValidationErrors
from .psystem import classify_system
from .trace import read_trace, write_trace


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _non_negative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def report_error(source: str, exc: AgcError) -> None:
    if isinstance(exc, ValidationErrors):
        for d in exc.diagnostics:
            print(f"{source}:{d.line}:{d.col}: {d.code}: {d.message}", file=sys.stderr)
    elif isinstance(exc, ParseError):
        print(f"{source}:{exc.line}:{exc.col}: {exc.code}: {exc.message}", file=sys.stderr)
    else:
        print(f"{source}: {exc.code}: {exc}", file=sys.stderr)


def cmd_validate(args) -> int:
    d = load_chemistry(args.file)
    print(f"{args.file}: ok ({d.mode}, {len(d.rules)} rules)")
    return 0


def cmd_run(args) -> int:
    d = load_chemistry(args.file)
    trace = run_chemistry(d, args.seed, args.steps, args.sample_every)
    if args.trace:
        write_trace(trace, args.trace, "jsonl")
    if args.summary:
        write_trace(trace, args.summary, "csv-summary")
    last = trace.snapshots[-1]
    size = sum(sum(r.values()) for r in last.regions.values())
    kinds = len({s for r in last.regions.values() for s in r})
    print(f"steps={last.step} reason={trace.reason} species={kinds} objects={size}")
    return 0


def _format_ratio(v: float | None) -> str:
    if v is None:
        return "undefined"
    return "inf" if math.isinf(v) else repr(v)


def cmd_analyze(args) -> int:
    trace = read_trace(args.trace)
    did = False
    if args.species:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["step", "region", "species", "count"])
        for row in analysis.species_series(trace, args.interval):
            w.writerow([row.step, row.region, row.species, row.count])
        did = True
    needs_rules = args.organizations or args.order_parameter
    if needs_rules:
        d = chemistry_from_trace(trace)
        if d.mode == "classic":
            print("organization analysis needs a reactor or agc trace", file=sys.stderr)
            return 1
    if args.organizations:
        rep = analysis.organization_report(trace, d.rules, args.probe_depth, d.params.weight_tolerance)
        print(f"level={rep.level} closed={str(rep.closed).lower()} self_maintaining={str(rep.self_maintaining).lower()}")
        for sid in rep.replicators:
            print(f"replicator {sid}")
        if rep.level2_pair:
            a, b = rep.level2_pair
            print(f"level2 {' '.join(a)} | {' '.join(b)}")
        did = True
    if args.order_parameter:
        print(f"order_parameter={_format_ratio(analysis.order_parameter(d.rules))}")
        did = True
    if args.network:
        net = analysis.extract_network(trace)
        try:
            Path(args.network).write_text(net.to_text(trace.species), encoding="utf-8")
        except OSError as exc:
            print(f"{args.network}: io-failure: {exc}", file=sys.stderr)
            return 1
        print(f"network species={len(net.species)} reactions={len(net.reactions)}")
        did = True
    if not did:
        print(f"mode={trace.mode} seed={trace.seed} snapshots={len(trace.snapshots)} "
              f"events={len(trace.events)} reason={trace.reason}")
    return 0


def cmd_classify(args) -> int:
    d = load_chemistry(args.file)
    if d.mode != "classic":
        print(f"{args.file}: classify applies to classic chemistries only", file=sys.stderr)
        return 1
    kind = classify_system(d.psystem())
    if isinstance(kind, tuple):
        print(f"{kind[0]} catalysts={','.join(sorted(kind[1]))}")
    else:
        print(kind)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agc", description="P systems and artificial graph chemistries")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a chemistry file")
    v.add_argument("file")
    v.set_defaults(func=cmd_validate, source="file")

    r = sub.add_parser("run", help="run a chemistry")
    r.add_argument("file")
    r.add_argument("--seed", type=_u64, required=True)
    r.add_argument("--steps", type=_non_negative, required=True)
    r.add_argument("--trace", help="write a jsonl trace here")
    r.add_argument("--summary", help="write a species-count csv here")
    r.add_argument("--sample-every", type=_positive, default=None)
    r.set_defaults(func=cmd_run, source="file")

    a = sub.add_parser("analyze", help="analyze a jsonl trace")
    a.add_argument("trace")
    a.add_argument("--species", action="store_true", help="print the species time series as csv")
    a.add_argument("--interval", type=_positive, default=1, help="sampling interval for --species")
    a.add_argument("--organizations", action="store_true")
    a.add_argument("--probe-depth", type=_positive, default=analysis.DEFAULT_PROBE_DEPTH)
    a.add_argument("--network", help="write the reaction network here")
    a.add_argument("--order-parameter", action="store_true")
    a.set_defaults(func=cmd_analyze, source="trace")

    c = sub.add_parser("classify", help="classify a classic P system")
    c.add_argument("file")
    c.set_defaults(func=cmd_classify, source="file")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AgcError as exc:
        report_error(getattr(args, args.source), exc)
        return 1
    except BrokenPipeError:
        # output piped into e.g. head; silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
