"""Command-line entry point: ``syncsim run|sweep|trace``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from syncsim import __version__
from syncsim.config import config_to_dict, load_config, parse_value
from syncsim.errors import ConfigError, GraphError, ParseError, SyncSimError
from syncsim.experiment import ExperimentResult, run_experiment, sweep
from syncsim.metrics import export
from syncsim.traces import (
    emit_duration_csv,
    emit_mobility_csv,
    parse_duration_csv,
    parse_mobility_csv,
    resample,
    synth_duration_trace,
    synth_mobility,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIM = 3


def _dump_jsonl(rows, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")


def _write_meta(out: Path, cfg, command: dict) -> None:
    meta = {"tool": "syncsim", "version": __version__, "command": command, "config": config_to_dict(cfg)}
    with open(out / "meta.json", "w", encoding="utf-8", newline="") as f:
        json.dump(meta, f, sort_keys=True, indent=2)
        f.write("\n")


def _load(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.runs is not None:
        overrides["runs_per_replication"] = args.runs
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _write_outputs(out: Path, results: list[ExperimentResult], fmt: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    export([r.report for r in results], out / f"report.{fmt}", fmt)
    rows = []
    for r in results:
        extra = {k: r.report.key[k] for k in ("sweep_param", "sweep_value") if k in r.report.key}
        rows.extend({**d, **extra} for d in r.decisions)
    _dump_jsonl(rows, out / "decisions.jsonl")


def cmd_run(args) -> int:
    cfg = _load(args)
    result = run_experiment(cfg, jobs=args.jobs)
    out = Path(args.out)
    _write_outputs(out, [result], args.format)
    _write_meta(out, cfg, {"name": "run"})
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = [parse_value(v) for v in args.values.split(",") if v != ""]
    results = sweep(cfg, args.param, values, jobs=args.jobs)
    out = Path(args.out)
    _write_outputs(out, results, args.format)
    _write_meta(out, cfg, {"name": "sweep", "param": args.param, "values": values})
    return EXIT_OK


def cmd_trace(args) -> int:
    if args.trace_cmd == "resample":
        grid = resample(parse_mobility_csv(args.input), args.interval)
        emit_mobility_csv(grid.samples(), args.out)
    elif args.trace_cmd == "export":
        if args.kind == "mobility":
            emit_mobility_csv(parse_mobility_csv(args.input), args.out)
        else:
            emit_duration_csv(parse_duration_csv(args.input), args.out)
    elif args.trace_cmd == "synth":
        if args.kind == "mobility":
            samples = synth_mobility(args.count, args.duration, args.speed, args.seed, args.interval, args.area)
            emit_mobility_csv(samples, args.out)
        else:
            emit_duration_csv(synth_duration_trace(args.count, args.min, args.max, args.seed), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="syncsim", description=__doc__)
    p.add_argument("--version", action="version", version=f"syncsim {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    def experiment_args(sp):
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--jobs", type=int, default=1, help="concurrent replications")
        sp.add_argument("--replications", type=int, help="override replications")
        sp.add_argument("--runs", type=int, help="override runs_per_replication")
        sp.add_argument("--format", choices=["csv", "jsonl"], default="csv", help="report format")

    run = sub.add_parser("run", help="run one experiment")
    experiment_args(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run one experiment per parameter value")
    experiment_args(sw)
    sw.add_argument("--param", required=True, help="config field (dotted for sections)")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.set_defaults(func=cmd_sweep)

    tr = sub.add_parser("trace", help="trace utilities")
    tsub = tr.add_subparsers(dest="trace_cmd", required=True)
    rs = tsub.add_parser("resample", help="resample a mobility CSV onto a regular grid")
    rs.add_argument("--input", required=True)
    rs.add_argument("--interval", type=float, default=30.0)
    rs.add_argument("--out", required=True)
    ex = tsub.add_parser("export", help="re-emit a trace in canonical form")
    ex.add_argument("--kind", choices=["mobility", "duration"], required=True)
    ex.add_argument("--input", required=True)
    ex.add_argument("--out", required=True)
    sy = tsub.add_parser("synth", help="generate a synthetic trace")
    sy.add_argument("--kind", choices=["mobility", "duration"], required=True)
    sy.add_argument("--count", type=int, required=True, help="nodes or durations")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--duration", type=float, default=86400.0, help="mobility span in seconds")
    sy.add_argument("--speed", type=float, default=10.0)
    sy.add_argument("--interval", type=float, default=30.0)
    sy.add_argument("--area", type=float, default=1000.0)
    sy.add_argument("--min", type=float, default=23.0)
    sy.add_argument("--max", type=float, default=269.0)
    sy.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_trace)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, GraphError) as e:
        print(f"syncsim: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SyncSimError, ValueError) as e:
        print(f"syncsim: simulation error: {e}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
