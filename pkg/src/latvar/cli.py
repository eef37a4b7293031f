"""Command-line pipeline: simulate -> verify -> analyze -> plan.

Each stage reads and writes plain files under a run directory, so any
stage can be rerun or checked in isolation. Identical inputs and seed
produce byte-identical outputs (the manifest, which carries wall-clock
time, is the one exception).

Exit codes: 0 success, 1 analysis finished with warnings, 2 invalid
input, 3 verification mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .analyze import (
    AnalysisConfig,
    analyze_segment,
    compare_segments,
    report_text_lines,
    report_tsv_lines,
    split_segments,
)
from .events import CatalogError, EventCatalog, default_catalog
from .plan import Budget, InvalidSlots, ZeroProbability, plan_lines
from .recorder import Recorder, RecorderConfig
from .sim import ConfigError, GroundTruthLedger, MachineConfig, load_scenario, run
from .trace import read_trace, write_trace

EXIT_OK = 0
EXIT_WARNINGS = 1
EXIT_BAD_INPUT = 2
EXIT_MISMATCH = 3


def _parse_duration(text: str) -> int:
    units = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": 1_000_000_000}
    for suffix, mult in sorted(units.items(), key=lambda kv: -len(kv[0])):
        if text.endswith(suffix):
            return int(float(text[: -len(suffix)]) * mult)
    return int(text)


def _write_manifest(out: Path, command: str, args: argparse.Namespace,
                    inputs: dict, outputs: list[str]) -> None:
    manifest = {
        "tool": "latvar",
        "version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "seed": getattr(args, "seed", None),
        "inputs": inputs,
        "outputs": outputs,
        "wall_clock_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load_catalog(path: str | None) -> EventCatalog:
    return EventCatalog.load(path) if path else default_catalog()


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    catalog = _load_catalog(args.catalog)
    scenario = load_scenario(args.scenario)
    machine = scenario.machine
    if args.machine:
        machine = MachineConfig.from_obj(json.loads(Path(args.machine).read_text()))
    if args.seed is not None:
        machine.seed = args.seed
    if args.cores is not None:
        machine.cores = args.cores
    duration = _parse_duration(args.duration)

    batch, ledger = run(machine, scenario, duration, catalog)
    recorder = Recorder(
        RecorderConfig(
            catalog=catalog,
            selection_rate=args.selection_rate,
            epoch_length=_parse_duration(args.epoch_len),
            seed=machine.seed,
        ),
        cores=machine.cores,
        backend=args.backend,
    )
    records = recorder.process(batch)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bytes_written = write_trace(records, out / "trace.tsv")
    ledger.dump(out / "ledger.tsv")
    catalog.dump(out / "catalog.txt")
    stats = recorder.stats(bytes_written=bytes_written)
    (out / "stats.txt").write_text("\n".join(stats.dump_lines()) + "\n")
    outputs = ["trace.tsv", "ledger.tsv", "catalog.txt", "stats.txt"]
    if args.dump_events:
        with open(out / "events.txt", "w") as f:
            for line in batch.dump_lines(catalog):
                f.write(line + "\n")
        outputs.append("events.txt")
    _write_manifest(out, "simulate", args,
                    {"scenario": str(args.scenario), "machine": args.machine,
                     "duration": duration, "selection_rate": args.selection_rate},
                    outputs)
    print(
        f"simulated {len(batch)} events on {machine.cores} cores; "
        f"{stats.tasks_seen} tasks seen, {stats.records_emitted} recorded "
        f"({bytes_written} trace bytes) -> {out}"
    )
    return EXIT_OK


# -- verify --------------------------------------------------------------------


def cmd_verify(args: argparse.Namespace) -> int:
    records, errors = read_trace(args.trace)
    ledger = GroundTruthLedger.load(args.ledger)
    diffs: list[str] = []
    for rec in records:
        truth = ledger.tasks.get(rec.task_id)
        if truth is None:
            diffs.append(f"{rec.task_id}: not in ledger")
            continue
        if rec.begin_ts != truth.begin or rec.end_ts != truth.end:
            diffs.append(
                f"{rec.task_id}: span {rec.begin_ts}..{rec.end_ts}"
                f" != ledger {truth.begin}..{truth.end}"
            )
        for key, val in rec.values.items():
            expect = ledger.value(rec.task_id, key)
            if val != expect:
                diffs.append(f"{rec.task_id}: {key} = {val}, ledger says {expect}")
    for err in errors:
        diffs.append(f"trace line {err.line_no}: malformed ({err.reason})")
    if diffs:
        print(f"FAIL: {len(diffs)} mismatches in {len(records)} records")
        for d in diffs[:10]:
            print("  " + d)
        return EXIT_MISMATCH
    print(f"PASS: {len(records)} records match the ledger exactly")
    return EXIT_OK


# -- analyze -------------------------------------------------------------------


def cmd_analyze(args: argparse.Namespace) -> int:
    catalog = _load_catalog(args.catalog)
    records, errors = read_trace(args.trace)
    if errors:
        print(f"warning: {len(errors)} malformed trace lines skipped", file=sys.stderr)
    if not records:
        print("error: trace has no records", file=sys.stderr)
        return EXIT_BAD_INPUT
    config = AnalysisConfig(
        p_target=args.p_target,
        min_tasks_per_event=args.min_tasks,
        cdf_ranges=args.cdf_ranges,
    )
    config.validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[str] = []
    warned = bool(errors)

    if args.segments or args.segment_length:
        if args.segments:
            segments = split_segments(records, count=args.segments)
        else:
            segments = split_segments(records, length=_parse_duration(args.segment_length))
        reports = []
        for seg in segments:
            rep = analyze_segment(seg.records, catalog, config,
                                  segment_index=seg.index, stats=seg.stats)
            reports.append(rep)
            for suffix, lines in (("tsv", report_tsv_lines(rep)), ("txt", report_text_lines(rep))):
                name = f"segment_{seg.index:03d}.report.{suffix}"
                (out / name).write_text("\n".join(lines) + "\n")
                outputs.append(name)
            warned = warned or bool(rep.notes)
        summary = compare_segments(reports)
        (out / "cross_segments.tsv").write_text("\n".join(summary.dump_lines()) + "\n")
        outputs.append("cross_segments.tsv")
        print(
            f"analyzed {len(reports)} segments; max tail in segment {summary.max_index}, "
            f"{len(summary.flagged)} events change rank vs median segment"
        )
        if summary.flagged:
            print("flagged: " + ", ".join(summary.flagged))
    else:
        rep = analyze_segment(records, catalog, config)
        (out / "report.tsv").write_text("\n".join(report_tsv_lines(rep)) + "\n")
        (out / "report.txt").write_text("\n".join(report_text_lines(rep)) + "\n")
        outputs += ["report.tsv", "report.txt"]
        warned = warned or bool(rep.notes)
        top = rep.ranked[0].event if rep.ranked else "(none)"
        print(f"analyzed {rep.task_count} tasks; top ranked event: {top}")

    _write_manifest(out, "analyze", args,
                    {"trace": str(args.trace), "catalog": args.catalog,
                     "p_target": args.p_target},
                    outputs)
    return EXIT_WARNINGS if warned else EXIT_OK


# -- plan ------------------------------------------------------------------------


def cmd_plan(args: argparse.Namespace) -> int:
    budget = Budget.build(
        args.p_tail,
        args.p_req,
        p_event=args.p_event,
        counters_total=args.counters,
        slots=args.slots,
        target_occurrences=args.occurrences,
        throughput=args.throughput,
    )
    for line in plan_lines(budget):
        print(line)
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latvar", description=__doc__)
    p.add_argument("--version", action="version", version=f"latvar {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and record a trace")
    sim.add_argument("--scenario", required=True,
                     help="builtin scenario name or JSON file")
    sim.add_argument("--machine", help="machine config JSON (overrides scenario's)")
    sim.add_argument("--catalog", help="catalog file (default: builtin)")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--duration", default="1s", help="e.g. 500ms, 2s, or ns")
    sim.add_argument("--cores", type=int, default=None)
    sim.add_argument("--selection-rate", type=float, default=1.0)
    sim.add_argument("--epoch-len", default="1s")
    sim.add_argument("--backend", default="auto", choices=["auto", "python", "cython"])
    sim.add_argument("--dump-events", action="store_true")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="check a trace against its ground-truth ledger")
    ver.add_argument("trace")
    ver.add_argument("ledger")
    ver.set_defaults(func=cmd_verify)

    ana = sub.add_parser("analyze", help="rank events by impact on tail latency")
    ana.add_argument("trace")
    ana.add_argument("--catalog", help="catalog file (default: builtin)")
    ana.add_argument("--p-target", type=float, default=0.99)
    ana.add_argument("--min-tasks", type=int, default=100)
    ana.add_argument("--cdf-ranges", type=int, default=1000)
    ana.add_argument("--segments", type=int, default=0,
                     help="split into N segments and compare them")
    ana.add_argument("--segment-length", default=None,
                     help="split into fixed-duration segments (e.g. 100ms)")
    ana.add_argument("--out", required=True)
    ana.set_defaults(func=cmd_analyze)

    pl = sub.add_parser("plan", help="recording-length budget")
    pl.add_argument("--p-tail", type=float, required=True)
    pl.add_argument("--p-req", type=float, required=True)
    pl.add_argument("--p-event", type=float, default=None)
    pl.add_argument("--counters", type=int, default=None,
                    help="configurable counters M (for pair coverage)")
    pl.add_argument("--slots", type=int, default=None, help="slots per epoch k")
    pl.add_argument("--occurrences", type=int, default=1)
    pl.add_argument("--throughput", type=float, default=None)
    pl.set_defaults(func=cmd_plan)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CatalogError, ZeroProbability, InvalidSlots, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
