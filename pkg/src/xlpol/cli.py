"""Command line entry point: ``xlpol simulate | bench-complexity | figure``."""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import __version__
from .harness import (ARMS, AXES, DEFAULT_ARMS, FIGURE_KINDS, CsvStream, SweepSpec, complexity_benchmark,
                      dump_trial_channel, emit_results, figure_data, header_lines, run_sweep)
from .scenario import ScenarioConfig, ScenarioError, load_scenario_file


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _scenario(args) -> ScenarioConfig:
    cfg = load_scenario_file(args.scenario) if args.scenario else ScenarioConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    return cfg.replace(**changes) if changes else cfg


def _spec(args, cfg: ScenarioConfig) -> SweepSpec:
    values = tuple(_floats(args.values)) if args.values else ()
    arms = tuple(a.strip() for a in args.arms.split(",") if a.strip())
    return SweepSpec(cfg, args.sweep, values, arms, cfg.trials, args.snr, args.k, args.workers)


def cmd_simulate(args) -> int:
    cfg = _scenario(args)
    spec = _spec(args, cfg)
    os.makedirs(args.out, exist_ok=True)
    config = spec.resolved()
    stream = CsvStream(os.path.join(args.out, "records.partial.csv"), config)
    try:
        records = run_sweep(spec, stream.write)
    finally:
        stream.close()
    os.remove(stream.path)
    paths = emit_results(records, args.format, args.out, config)
    if args.dump_channel is not None:
        path = os.path.join(args.out, f"channel_trial{args.dump_channel}.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(header_lines(config)) + "\n" + dump_trial_channel(cfg, args.dump_channel))
        paths.append(path)
    if args.dump_ddmap is not None:
        data = figure_data("ddmap", spec, args.out, trial=args.dump_ddmap)
        paths.extend(data["files"].values())
    n_err = sum(1 for r in records if r.error)
    for p in paths:
        print(p)
    if n_err:
        print(f"warning: {n_err} trial record(s) carry an error tag", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    rows = complexity_benchmark(_ints(args.n_grid), _ints(args.k_grid), _ints(args.l_grid), args.seed)
    config = {"n_grid": args.n_grid, "k_grid": args.k_grid, "l_grid": args.l_grid, "seed": args.seed}
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        out.write("\n".join(header_lines(config)) + "\n")
        w = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_figure(args) -> int:
    cfg = _scenario(args)
    spec = _spec(args, cfg)
    os.makedirs(args.out, exist_ok=True)
    kw = {}
    if args.kind == "ddmap" or args.kind == "power_imbalance":
        kw["trial"] = args.trial
    data = figure_data(args.kind, spec, args.out, **kw)
    for p in data["files"].values():
        print(p)
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario YAML file (defaults apply when omitted)")
    p.add_argument("--sweep", choices=AXES, default="snr", help="swept parameter")
    p.add_argument("--values", help="axis values, comma separated (snr default: the scenario grid)")
    p.add_argument("--arms", default=",".join(DEFAULT_ARMS), help=f"comma separated subset of {','.join(ARMS)}")
    p.add_argument("--trials", type=int, help="trials per axis point")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--snr", type=float, default=20.0, help="fixed SNR in dB for non-SNR sweeps")
    p.add_argument("--k", type=int, help="subset size for the random/top-power baselines")
    p.add_argument("--workers", type=int, default=1, help="worker processes across trials")
    p.add_argument("--out", default="results", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xlpol", description=__doc__)
    parser.add_argument("--version", action="version", version=f"xlpol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo sweep")
    _add_common(sim)
    sim.add_argument("--format", choices=("csv", "json", "both"), default="csv")
    sim.add_argument("--dump-channel", type=int, metavar="TRIAL", help="also write that trial's channel")
    sim.add_argument("--dump-ddmap", type=int, metavar="TRIAL", help="also write delay-Doppler maps for that trial")
    sim.set_defaults(func=cmd_simulate)

    bench = sub.add_parser("bench-complexity", help="measured vs analytic selection cost")
    bench.add_argument("--n-grid", default="64,128,256,512,1024,2048,4096")
    bench.add_argument("--k-grid", default="1")
    bench.add_argument("--l-grid", default="1")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", help="CSV path (stdout when omitted)")
    bench.set_defaults(func=cmd_bench)

    fig = sub.add_parser("figure", help="write gridded data for one figure")
    fig.add_argument("--kind", choices=FIGURE_KINDS, required=True)
    fig.add_argument("--trial", type=int, default=0, help="realization index for single-trial figures")
    _add_common(fig)
    fig.set_defaults(func=cmd_figure)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        where = "".join(f" [{k} {v}]" for k, v in (("field", exc.field), ("line", exc.line)) if v is not None)
        print(f"xlpol: scenario error{where}: {exc}", file=sys.stderr)
    except (ValueError, OSError, KeyError) as exc:
        print(f"xlpol: error: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
