"""``megsim`` command line: simulation runs, plan tools, market directory, analysis."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import gmd, plan, report
from .gridsim import load_scenario, run_simulation, bundled_scenario
from .megdata import (DEFAULT_SAMPLE_RATE, Component, SyntheticSpec, load_any, store_recording,
                      synthesize_recording, window)
from .scheduler import STRATEGIES
from .wavelet import WaveletConfig, analyze_pair, cwt, emit_asc, emit_ppm, output_stem
from .workload import (MetaJob, WorkloadSpec, estimate_workload, execute_meta_job,
                       fine_job_count, generate_meta_jobs, pair_count, serial_seconds)


def _scenario(args):
    sc = load_scenario(args.scenario) if args.scenario else bundled_scenario()
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    qos = sc.qos
    if getattr(args, "strategy", None):
        qos = replace(qos, strategy=args.strategy)
    if args.deadline is not None:
        qos = replace(qos, deadline=args.deadline)
    if args.budget is not None:
        qos = replace(qos, budget=args.budget)
    return replace(sc, qos=qos)


def cmd_run(args) -> int:
    sc = _scenario(args)
    log = run_simulation(sc)
    out = report.write_run(log, args.out, figures=not args.no_figures)
    s = log.summary
    print(s.row())
    if not s.within_deadline:
        print(f"warning: finished over deadline or incomplete ({s.jobs_done}/{s.total_jobs} jobs)",
              file=sys.stderr)
    print(f"wrote {out}", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    base = _scenario(args)
    logs = []
    for strategy in STRATEGIES:
        log = run_simulation(base.with_strategy(strategy))
        report.write_run(log, Path(args.out) / strategy, figures=not args.no_figures)
        logs.append(log)
        print(log.summary.row())
    report.write_summary([log.summary for log in logs], Path(args.out) / "summary.csv")
    if not args.no_figures:
        report.plot_comparison(logs, Path(args.out) / "comparison.png")
    return 0


def cmd_plan_parse(args) -> int:
    p = plan.parse_plan(Path(args.file).read_text())
    print(json.dumps(plan.plan_to_dict(p), indent=2))
    return 0


def cmd_plan_expand(args) -> int:
    p = plan.parse_plan(Path(args.file).read_text())
    swept = [d.name for d in p.parameters if d.kind == "range"]
    for b in plan.expand_parameters(p):
        print(b.jobname, " ".join(f"{k}={b.values[k]}" for k in swept))
    return 0


def cmd_plan_print(args) -> int:
    sys.stdout.write(plan.print_plan(plan.parse_plan(Path(args.file).read_text())))
    return 0


def cmd_gmd_publish(args) -> int:
    reg = gmd.Registry(args.registry)
    for entry in gmd.read_jsonl(args.file):
        reg.publish(entry)
    return 0


def cmd_gmd_query(args) -> int:
    reg = gmd.Registry(args.registry)
    for entry in reg.query(args.service, args.max_price):
        print(entry.to_json())
    return 0


def cmd_workload(args) -> int:
    spec = WorkloadSpec(args.sensors, args.offset_max, args.meta_size,
                        per_fine_job_cpu_sec=args.fine_seconds)
    jobs = generate_meta_jobs(spec)
    fine = fine_job_count(args.sensors, args.offset_max)
    print(f"pairs={pair_count(args.sensors)} fine_jobs={fine} meta_jobs={len(jobs)} "
          f"work_units_per_job={jobs[0].work_units:g}")
    if args.seconds is not None:
        n = estimate_workload(args.sensors, args.seconds)
        print(f"per_second_jobs={n} serial_days={serial_seconds(n, args.fine_seconds) / 86400:.1f}")
    return 0


def cmd_synth(args) -> int:
    delays = [float(d) for d in args.delays.split(",")] if args.delays else [0.0] * args.sensors
    if len(delays) != args.sensors:
        raise SystemExit("--delays needs one value per sensor")
    comps = tuple(Component(f, args.amplitude, tuple(delays)) for f in args.freq)
    spec = SyntheticSpec(args.sensors, args.samples, comps, args.rate, args.noise, args.seed)
    store_recording(synthesize_recording(spec), args.out)
    return 0


def cmd_analyze(args) -> int:
    rec = load_any(args.recording)
    cfg = WaveletConfig.default(rec.sample_rate_hz, args.window_len)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.pair:
        a, b = args.pair
        cmap = analyze_pair(rec, a, b, args.offset, args.window_len, cfg)
        stem = output_stem(a, b, args.offset)
        emit_asc(cmap, out / f"{stem}.asc")
        emit_ppm(cmap, out / f"{stem}.ppm")
        # report the lag at the scale carrying the most signal energy; coarse scales with
        # little energy correlate near 1 everywhere and say nothing about delay
        coeffs = cwt(window(rec, a, args.offset, args.window_len), cfg).coefficients
        k = int(np.argmax((np.abs(coeffs) ** 2).mean(axis=1)))
        print(f"dominant scale {cmap.scales[k]:.2f} samples, peak lag {cmap.peak_lag(k)}")
        return 0
    job = MetaJob(1, args.offset, args.count, rec.sensor_count,
                  work_units=1.0, input_bytes=rec.payload_bytes)
    res = execute_meta_job(job, rec, cfg, out, window_len=args.window_len)
    print(res.archive)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="megsim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_opts(p, strategy=True):
        p.add_argument("--scenario", help="scenario JSON (default: bundled five-site testbed)")
        if strategy:
            p.add_argument("--strategy", choices=STRATEGIES)
        p.add_argument("--seed", type=int)
        p.add_argument("--deadline", type=float, help="seconds")
        p.add_argument("--budget", type=float, help="G$")
        p.add_argument("--out", default="out")
        p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("run", help="simulate one strategy")
    scenario_opts(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="simulate all three strategies")
    scenario_opts(p, strategy=False)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plan", help="plan file tools")
    psub = p.add_subparsers(dest="plan_command", required=True)
    for name, fn in (("parse", cmd_plan_parse), ("expand", cmd_plan_expand),
                     ("print", cmd_plan_print)):
        q = psub.add_parser(name)
        q.add_argument("file")
        q.set_defaults(func=fn)

    p = sub.add_parser("gmd", help="grid market directory")
    gsub = p.add_subparsers(dest="gmd_command", required=True)
    q = gsub.add_parser("publish")
    q.add_argument("file", help="JSON-lines service entries")
    q.add_argument("--registry", default="gmd.jsonl")
    q.set_defaults(func=cmd_gmd_publish)
    q = gsub.add_parser("query")
    q.add_argument("--registry", default="gmd.jsonl")
    q.add_argument("--service")
    q.add_argument("--max-price", type=float)
    q.set_defaults(func=cmd_gmd_query)

    p = sub.add_parser("workload", help="job counts for a sweep")
    p.add_argument("--sensors", type=int, default=64)
    p.add_argument("--offset-max", type=int, default=29750)
    p.add_argument("--meta-size", type=int, default=10)
    p.add_argument("--seconds", type=int, help="recording length for the per-second estimate")
    p.add_argument("--fine-seconds", type=float, default=1.214)
    p.set_defaults(func=cmd_workload)

    p = sub.add_parser("synth", help="write a synthetic MEGR recording")
    p.add_argument("--out", required=True)
    p.add_argument("--sensors", type=int, default=2)
    p.add_argument("--samples", type=int, default=4096)
    p.add_argument("--rate", type=float, default=DEFAULT_SAMPLE_RATE)
    p.add_argument("--freq", type=float, action="append", default=[])
    p.add_argument("--amplitude", type=float, default=100.0)
    p.add_argument("--delays", help="comma separated, samples per sensor")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="wavelet cross-correlation of a recording")
    p.add_argument("recording")
    p.add_argument("--pair", type=int, nargs=2, metavar=("A", "B"))
    p.add_argument("--offset", type=int, default=0)
    p.add_argument("--count", type=int, default=1, help="offsets per meta-job")
    p.add_argument("--window-len", type=int, default=256)
    p.add_argument("--out", default="analysis")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"megsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
