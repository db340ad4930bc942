"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error (bad trace, config or
infeasible parameters).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from ._io import atomic_write_text
from .config import MODES, ConfigError, SimConfig, load_config
from .grouping import InfeasibleGroupingError, ini_group, w_inter
from .sim import (FlowClass, MetricsReport, compare_runs, latency_classification, run,
                  total_reduction)
from .traffic import (TraceFormatError, compute_intensity_matrix, dumps_trace, expand_trace,
                      generate_synthetic_trace, load_trace, mean_centrality)

log = logging.getLogger("lazyctrl")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--config", help="INI config file with [lazyctrl]/[thresholds]/[latency]")
    p.add_argument("--out", help="output path")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="lazyctrl", description="Hybrid SDN control plane simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-trace", parents=[common], help="generate a synthetic trace")
    g.add_argument("--switches", type=int, default=50)
    g.add_argument("--hosts", type=int, default=1000)
    g.add_argument("--tenant-size", type=int, nargs=2, default=(20, 100), metavar=("MIN", "MAX"))
    g.add_argument("--p", type=float, default=90.0, help="percent of flows on hot pairs")
    g.add_argument("--q", type=float, default=10.0, help="percent of host pairs that are hot")
    g.add_argument("--duration", type=float, default=86400.0, help="seconds")
    g.add_argument("--flows", type=int, default=100_000)
    g.add_argument("--zones", type=int, default=5, help="placement zones")
    g.add_argument("--expand", type=float, default=0.0,
                   help="percent of extra flows between previously silent pairs")
    g.add_argument("--expand-window", type=float, nargs=2, default=(8 * 3600.0, 24 * 3600.0),
                   metavar=("T0", "T1"))

    gr = sub.add_parser("group", parents=[common], help="compute an initial grouping")
    gr.add_argument("--trace", required=True)
    gr.add_argument("--limit", type=int, required=True, help="group size limit")
    gr.add_argument("--groups", type=int, default=None, help="number of groups")
    gr.add_argument("--window", type=float, nargs=2, default=None, metavar=("T0", "T1"),
                    help="traffic window in seconds (default: first hour)")

    s = sub.add_parser("simulate", parents=[common], help="replay a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--mode", choices=MODES, default=None)
    s.add_argument("--limit", type=int, default=None, help="group size limit")
    s.add_argument("--groups", type=int, default=None, help="number of initial groups")
    s.add_argument("--duration", type=float, default=None, help="seconds")
    s.add_argument("--faults", default=None, help="fault script (at_s,kind,subject lines)")
    s.add_argument("--csv", default=None, help="per-minute CSV (default: --out with .csv)")
    s.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2",
                   help="run every combination; KEY in mode, limit, seed")
    s.add_argument("--jobs", type=int, default=1, help="parallel runs for --sweep")

    c = sub.add_parser("compare", parents=[common], help="per-hour PacketIn reduction")
    c.add_argument("baseline", help="metrics JSON of the reference run")
    c.add_argument("other", help="metrics JSON of the run to compare")

    a = sub.add_parser("analyze", parents=[common], help="locality statistics of a trace")
    a.add_argument("--trace", required=True)
    a.add_argument("--groups", type=int, nargs="+", default=[2, 4, 8, 16],
                   help="group counts for the W_inter sweep")
    a.add_argument("--window", type=float, nargs=2, default=None, metavar=("T0", "T1"))
    return parser


# --- helpers ----------------------------------------------------------------


def _resolve_sim_config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    changes = {"trace_path": args.trace}
    for name, attr in (("mode", "mode"), ("limit", "size_limit"), ("groups", "n_groups"),
                       ("duration", "duration_s"), ("faults", "fault_script"),
                       ("seed", "seed")):
        value = getattr(args, name)
        if value is not None:
            changes[attr] = value
    return cfg.replace(**changes)


def _log_config(cfg) -> None:
    log.info("resolved config: %s", json.dumps(cfg, sort_keys=True, default=str))


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


def _csv_path(out: str) -> str:
    root, _ = os.path.splitext(out)
    return root + ".csv"


# --- commands ---------------------------------------------------------------


def cmd_gen_trace(args) -> int:
    seed = args.seed if args.seed is not None else 0
    _log_config({k: v for k, v in vars(args).items() if k != "func"} | {"seed": seed})
    trace = generate_synthetic_trace(args.switches, args.hosts, tuple(args.tenant_size),
                                     args.p, args.q, args.duration, args.flows, seed=seed,
                                     n_zones=args.zones)
    if args.expand:
        trace = expand_trace(trace, args.expand, tuple(args.expand_window), seed=seed)
    _write(args.out, dumps_trace(trace))
    log.info("wrote %d flows", len(trace.flows))
    return EXIT_OK


def cmd_group(args) -> int:
    seed = args.seed if args.seed is not None else 0
    _log_config({k: v for k, v in vars(args).items() if k != "func"} | {"seed": seed})
    trace = load_trace(args.trace)
    window = tuple(args.window) if args.window else (0.0, 3600.0)
    w = compute_intensity_matrix(trace, window)
    t0 = time.perf_counter()
    grouping = ini_group(w, args.limit, seed=seed, k=args.groups)
    elapsed = time.perf_counter() - t0
    out = grouping.to_dict() | {
        "w_inter": w_inter(grouping, w),
        "elapsed_s": round(elapsed, 6),
        "mean_centrality": mean_centrality(trace, grouping.groups, window),
        "window_s": list(window),
    }
    _write(args.out, json.dumps(out, sort_keys=True) + "\n")
    print(f"{len(grouping.groups)} groups, W_inter={out['w_inter']:.6g}, "
          f"elapsed={elapsed:.3f}s", file=sys.stderr)
    return EXIT_OK


def _sweep_grid(specs: list[str]) -> list[dict]:
    keys = {"mode": ("mode", str), "limit": ("size_limit", int), "seed": ("seed", int)}
    grid: list[dict] = [{}]
    for spec in specs:
        key, _, values = spec.partition("=")
        if key not in keys or not values:
            raise UsageError(f"bad --sweep {spec!r}; expected KEY=V1,V2 with KEY in {list(keys)}")
        attr, typ = keys[key]
        try:
            vals = [typ(v) for v in values.split(",")]
        except ValueError:
            raise UsageError(f"bad value in --sweep {spec!r}") from None
        grid = [g | {attr: v} for g in grid for v in vals]
    return grid


def _run_one(cfg: SimConfig) -> str:
    return run(cfg).to_json()


def cmd_simulate(args) -> int:
    base = _resolve_sim_config(args)
    if not args.sweep:
        _log_config(base.to_dict())
        report = run(base)
        if args.out is None:
            sys.stdout.write(report.to_json())
        else:
            report.write(args.out, args.csv or _csv_path(args.out))
        _print_summary(report)
        return EXIT_OK

    if args.out is None:
        raise UsageError("--sweep needs --out as a file name template")
    grid = _sweep_grid(args.sweep)
    configs = [base.replace(**g) for g in grid]
    for cfg in configs:
        _log_config(cfg.to_dict())
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            texts = list(pool.map(_run_one, configs))
    else:
        texts = [_run_one(cfg) for cfg in configs]
    root, ext = os.path.splitext(args.out)
    for g, text in zip(grid, texts):
        tag = ".".join(f"{k}-{v}" for k, v in sorted(g.items()))
        report = MetricsReport.from_json(text)
        report.write(f"{root}.{tag}{ext or '.json'}", f"{root}.{tag}.csv")
        print(tag, file=sys.stderr)
        _print_summary(report)
    return EXIT_OK


def _print_summary(report: MetricsReport) -> None:
    print(f"mode={report.mode} flows={report.n_flows} packet_in={report.packet_in_total} "
          f"regroups={sum(1 for ev in report.regroup_events if ev['moved'])} "
          f"triggers={len(report.regroup_events)}", file=sys.stderr)
    hist = latency_classification(report)
    for cls in (c.value for c in FlowClass):
        v = hist[cls]
        print(f"  {cls:<24} {v['count']:>8}  mean first-packet latency "
              f"{v['mean_latency_us']:.1f} us", file=sys.stderr)


def _read_report(path: str) -> MetricsReport:
    with open(path, encoding="utf-8") as fh:
        try:
            return MetricsReport.from_json(fh.read())
        except (json.JSONDecodeError, TypeError) as exc:
            raise ValueError(f"{path}: not a metrics report ({exc})") from None


def cmd_compare(args) -> int:
    a, b = _read_report(args.baseline), _read_report(args.other)
    reductions = compare_runs(a, b)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["hour", "packet_in_a", "packet_in_b", "reduction"])
    for h, r in enumerate(reductions):
        w.writerow([h, a.packet_in_per_hour[h], b.packet_in_per_hour[h],
                    "" if r is None else f"{r:.6f}"])
    tot = total_reduction(a, b)
    w.writerow(["total", a.packet_in_total, b.packet_in_total,
                "" if tot is None else f"{tot:.6f}"])
    _write(args.out, buf.getvalue())
    return EXIT_OK


def cmd_analyze(args) -> int:
    seed = args.seed if args.seed is not None else 0
    trace = load_trace(args.trace)
    n = trace.topology.n_switches
    window = tuple(args.window) if args.window else (0.0, max(trace.duration_us / 1e6, 1.0))
    w = compute_intensity_matrix(trace, window)
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["groups", "size_limit", "w_inter", "mean_centrality"])
    for k in args.groups:
        if not 1 <= k <= n:
            raise UsageError(f"group count {k} outside 1..{n}")
        limit = -(-n // k)
        g = ini_group(w, limit, seed=seed, k=k)
        out.writerow([k, limit, f"{w_inter(g, w):.9g}",
                      f"{mean_centrality(trace, g.groups, window):.6f}"])
    _write(args.out, buf.getvalue())
    return EXIT_OK


COMMANDS = {"gen-trace": cmd_gen_trace, "group": cmd_group, "simulate": cmd_simulate,
            "compare": cmd_compare, "analyze": cmd_analyze}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lazyctrl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceFormatError, ConfigError, InfeasibleGroupingError, ValueError, KeyError,
            OSError) as exc:
        print(f"lazyctrl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
