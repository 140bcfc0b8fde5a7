"""Command line: ``run``, ``sweep`` and ``validate``.

Exit codes: 0 success, 1 invalid scenario or sweep file, 2 failure while running.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .metrics import ConservationError, write_csv, write_series
from .network import Simulation
from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .sweep import PROTOCOLS, SweepError, load_sweep, run_sweep, write_sweep

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2


def _manifest(cfg: ScenarioConfig, source: str, report, extra: dict | None = None) -> dict:
    out = {
        "version": __version__,
        "scenario_file": source,
        "scenario_id": cfg.scenario.id,
        "protocol": cfg.scenario.protocol,
        "seed": cfg.scenario.seed,
        "features": cfg.features(),
        "config": cfg.to_dict(),
    }
    if report is not None:
        out["trace_hash"] = report.trace_digest
        out["drop_causes"] = dict(report.drop_causes)
        out["control_by_type"] = dict(report.control_by_type)
        out["in_flight"] = report.in_flight
    if extra:
        out.update(extra)
    return out


def _write_json(path: str, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    overrides = {}
    if args.sample_interval is not None:
        overrides["metrics__sample_interval_s"] = args.sample_interval
    cfg = cfg.with_overrides(protocol=args.protocol, seed=args.seed, **overrides)
    sim = Simulation(cfg)
    started = time.perf_counter()
    try:
        report = sim.run()
    except ConservationError as exc:
        print(f"error: consistency check failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    elapsed = time.perf_counter() - started
    os.makedirs(args.out, exist_ok=True)
    write_csv([report], os.path.join(args.out, "metrics.csv"))
    if sim.metrics.series:
        write_series(sim.metrics.series, os.path.join(args.out, "series"))
    _write_json(os.path.join(args.out, "manifest.json"), _manifest(cfg, args.scenario, report))
    pdr = f"{report.pdr:.4f}" if report.pdr_defined else "n/a"
    print(f"{cfg.scenario.id} {cfg.scenario.protocol} seed={cfg.scenario.seed}: "
          f"sent={report.sent} delivered={report.delivered} dropped={report.dropped} "
          f"pdr={pdr} ({elapsed:.1f}s) -> {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = load_sweep(args.spec)
    cells = spec.cells()
    print(f"sweep {spec.parameter} over {spec.values}: {len(cells)} runs, jobs={args.jobs}")
    try:
        results = run_sweep(spec, jobs=args.jobs)
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    paths = write_sweep(spec, results, args.out)
    manifest = _manifest(spec.base, args.spec, None, {
        "sweep": {
            "parameter": spec.parameter, "values": spec.values, "seeds": spec.seeds,
            "protocols": list(spec.protocols), "paired": spec.paired,
            "cells": [{"value": c.value, "seed_index": c.index, "master_seed": c.master_seed,
                       "protocol": c.protocol, "seed": c.seed, "trace_hash": r.trace_digest}
                      for c, r in results],
        }})
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"wrote {paths['runs']} and {paths['aggregate']}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_scenario(args.scenario)
    feats = ", ".join(f"{k}={'on' if v else 'off'}" for k, v in cfg.features().items())
    print(f"{args.scenario}: ok ({cfg.scenario.nodes} nodes, {cfg.scenario.sim_time_s:g} s, "
          f"protocol {cfg.scenario.protocol}; {feats})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manetsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario")
    run.add_argument("--protocol", choices=PROTOCOLS)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", default="results")
    run.add_argument("--sample-interval", type=float, metavar="S",
                     help="also write time series sampled every S seconds")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a parameter sweep")
    sweep.add_argument("spec")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--out", default="results")
    sweep.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
