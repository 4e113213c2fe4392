"""Command-line front end: run, analyze, render, predict, sweep.

Exit codes: 0 on success, 1 for configuration or usage problems, 2 when a
simulation fails (deadlock or internal inconsistency).
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .analysis import build_report
from .config import config_from_mapping, load_config
from .engine import SimulationError, run as run_simulation
from .fileformat import ConfigError, parse_sections
from .machines import list_presets, load_preset
from .model import (
    BandwidthCurve,
    chebfd_code_balance,
    exec_time,
    predicted_velocity,
    saturation_point,
)
from .render import RenderOptions, render_timeline
from .traceio import export_trace, import_trace

__all__ = ["main"]

ENV_THREADS = "DESYNC_SIM_THREADS"


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="desyncsim",
        description=(
            "Simulate idle waves and desynchronization of bulk-synchronous "
            "message-passing programs on bandwidth-saturated nodes."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="simulate a config and export trace + report")
    p_run.add_argument("config", help="config file")
    p_run.add_argument("--out", default=".", help="output directory")
    p_run.add_argument("--format", choices=("jsonl", "csv"), default=None,
                       help="trace format (default from config)")
    p_run.add_argument("--render", action="store_true", help="also write an SVG")
    p_run.set_defaults(func=_cmd_run)

    p_an = sub.add_parser("analyze", help="summarize an exported trace")
    p_an.add_argument("trace", help="trace file (.jsonl or .csv)")
    p_an.add_argument("--out", default=None, help="write report JSON here")
    p_an.set_defaults(func=_cmd_analyze)

    p_rd = sub.add_parser("render", help="render an exported trace to SVG")
    p_rd.add_argument("trace", help="trace file (.jsonl or .csv)")
    p_rd.add_argument("--out", default=None, help="SVG path (default: trace stem)")
    p_rd.add_argument("--width", type=int, default=1200, help="plot width in px")
    p_rd.add_argument("--wavefront-step", type=int, default=None,
                      help="overlay the completion polyline of this step")
    p_rd.set_defaults(func=_cmd_render)

    p_pr = sub.add_parser("predict", help="closed-form model values, no simulation")
    mode = p_pr.add_mutually_exclusive_group(required=True)
    mode.add_argument("--exec-time", action="store_true",
                      help="memory-bound phase duration in seconds")
    mode.add_argument("--velocity", action="store_true",
                      help="idle-wave velocity in ranks/s")
    mode.add_argument("--saturation-point", action="store_true",
                      help="cores needed to reach the saturation fraction")
    mode.add_argument("--code-balance", action="store_true",
                      help="byte/flop of the blocked Chebyshev filter kernel")
    p_pr.add_argument("--V", type=float, default=None, help="volume per step, bytes")
    p_pr.add_argument("--n", type=int, default=1, help="active cores")
    p_pr.add_argument("--b1", type=float, default=None, help="single-core B/s")
    p_pr.add_argument("--bsat", type=float, default=None, help="saturated B/s")
    p_pr.add_argument("--preset", default=None,
                      help=f"machine preset ({', '.join(list_presets())})")
    p_pr.add_argument("--tcomm", type=float, default=0.0,
                      help="per-step communication seconds")
    p_pr.add_argument("--d", type=int, default=1, help="neighbor distance")
    p_pr.add_argument("--sigma", type=int, default=1, help="velocity factor")
    p_pr.add_argument("--fraction", type=float, default=0.95,
                      help="saturation fraction")
    p_pr.add_argument("--nb", type=float, default=None, help="kernel block size")
    p_pr.set_defaults(func=_cmd_predict)

    p_sw = sub.add_parser("sweep", help="run a config over parameter variations")
    p_sw.add_argument("config", help="base config file")
    p_sw.add_argument("--vary", action="append", required=True, metavar="SEC.KEY=V1,V2",
                      help="values to sweep; repeat for a cartesian product")
    p_sw.add_argument("--out", default="sweep_out", help="output directory")
    p_sw.add_argument("--format", choices=("jsonl", "csv"), default=None)
    p_sw.set_defaults(func=_cmd_sweep)
    return parser


def _write_report(trace, path: Path) -> dict:
    report = build_report(trace)
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report


def _cmd_run(args) -> int:
    config = load_config(args.config)
    trace = run_simulation(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.config).stem
    fmt = args.format or config.output_format
    trace_path = out / f"{stem}.trace.{fmt}"
    export_trace(trace, trace_path, fmt)
    report = _write_report(trace, out / f"{stem}.report.json")
    if args.render:
        (out / f"{stem}.svg").write_text(render_timeline(trace))
    print(f"ran {config.processes} ranks x {config.workload.steps} steps: "
          f"makespan {trace.makespan():.6g} s")
    print(f"trace: {trace_path}")
    print(f"report: {out / f'{stem}.report.json'}")
    if args.render:
        print(f"timeline: {out / f'{stem}.svg'}")
    return 0


def _cmd_analyze(args) -> int:
    trace = import_trace(args.trace)
    report = build_report(trace)
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"report: {args.out}")
    else:
        print(text)
    return 0


def _cmd_render(args) -> int:
    trace = import_trace(args.trace)
    options = RenderOptions(width=args.width, wavefront_step=args.wavefront_step)
    out = args.out or str(Path(args.trace).with_suffix("")) + ".svg"
    Path(out).write_text(render_timeline(trace, options))
    print(f"timeline: {out}")
    return 0


def _predict_curve(args) -> BandwidthCurve:
    if args.preset is not None:
        if args.b1 is not None or args.bsat is not None:
            raise ConfigError("give either --preset or --b1/--bsat, not both")
        return load_preset(args.preset).curve
    if args.b1 is None or args.bsat is None:
        raise ConfigError("model prediction needs --preset or both --b1 and --bsat")
    return BandwidthCurve.analytic(args.b1, args.bsat)


def _cmd_predict(args) -> int:
    if args.code_balance:
        if args.nb is None:
            raise ConfigError("--code-balance needs --nb")
        print(f"{chebfd_code_balance(args.nb):.6g} byte/flop")
        return 0
    curve = _predict_curve(args)
    if args.saturation_point:
        print(f"{saturation_point(curve, args.fraction)} cores")
        return 0
    if args.V is None:
        raise ConfigError("this prediction needs --V (bytes per step)")
    if args.exec_time:
        print(f"{exec_time(args.V, args.n, curve):.6g} s")
        return 0
    velocity = predicted_velocity(args.n, args.V, curve, args.tcomm, args.d, args.sigma)
    print(f"{velocity:.6g} ranks/s")
    return 0


def _parse_vary(specs: list) -> list:
    axes = []
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"--vary {spec!r}: expected SECTION.KEY=V1,V2,...")
        target, _, values = spec.partition("=")
        if "." not in target:
            raise ConfigError(f"--vary {spec!r}: target must be SECTION.KEY")
        section, _, key = target.partition(".")
        items = [v.strip() for v in values.split(",") if v.strip()]
        if not items:
            raise ConfigError(f"--vary {spec!r}: no values given")
        axes.append((section, key, items))
    return axes


def _sweep_point(payload):
    mapping, label, out_dir, fmt = payload
    config = config_from_mapping(mapping, source=label)
    trace = run_simulation(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = fmt or config.output_format
    export_trace(trace, out / f"trace.{resolved}", resolved)
    _write_report(trace, out / "report.json")
    return label, trace.makespan()


def _cmd_sweep(args) -> int:
    text = Path(args.config).read_text(encoding="utf-8")
    sections = parse_sections(text, source=args.config)
    from .config import _sections_to_mapping  # shared with load_config

    base = _sections_to_mapping(sections, args.config)
    axes = _parse_vary(args.vary)

    points = [({}, "")]  # (overrides, label)
    for section, key, values in axes:
        points = [
            ({**overrides, (section, key): value},
             f"{label}_{key}={value}" if label else f"{key}={value}")
            for overrides, label in points
            for value in values
        ]
    jobs = []
    for overrides, label in points:
        mapping = copy.deepcopy(base)
        for (section, key), value in overrides.items():
            mapping.setdefault(section, {})[key] = value
        jobs.append((mapping, label, str(Path(args.out) / label), args.format))

    workers = os.environ.get(ENV_THREADS)
    workers = int(workers) if workers else (os.cpu_count() or 1)
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        results = [_sweep_point(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    for label, makespan in results:
        print(f"{label}: makespan {makespan:.6g} s")
    print(f"sweep results in {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
