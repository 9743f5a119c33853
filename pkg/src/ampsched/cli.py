"""Command-line front end: ``ampsched gen-dag | simulate | sweep | report``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from .dag import CholeskySpec, DagError, generate_cholesky, generate_random, load_dag, save_dag
from .engine import SimulationError, simulate
from .platform import PlatformError, PlatformModel, default_platform, load_platform, platform_from_dict, platform_to_dict
from .policies import PolicyConfig, PolicyError, PolicyKind
from .scheduler import BIDIRECTIONAL, BIG_ONLY, SchedulerConfig, SchedulerError

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

# Default sweep grid of (m, b) pairs.
DEFAULT_GRID = [
    (1024, 64),
    (1024, 128),
    (4096, 256),
    (4096, 512),
    (4608, 256),
    (4608, 512),
    (5120, 512),
    (5120, 1024),
    (6144, 512),
    (6144, 1024),
    (8192, 512),
    (8192, 1024),
]
DEFAULT_THRESHOLDS = [50, 40, 30, 20, 10]
ALL_POLICIES = [k.value for k in PolicyKind]

CONFIG_ERRORS = (DagError, PlatformError, PolicyError, ValueError, OSError)
RUNTIME_ERRORS = (SimulationError, SchedulerError)


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_grid(text: str) -> list[tuple[int, int]]:
    grid = []
    for item in text.split(","):
        try:
            m, b = item.split(":")
            grid.append((int(m), int(b)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"grid entries look like M:B, got {item!r}") from None
    return grid


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--platform", default=d(None), help="platform JSON (default: shipped exynos5422)")
    p.add_argument("--out", default=d("results"), help="output directory")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--workers", type=int, default=d(1), help="parallel sweep workers")


def _add_dag_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, help="matrix dimension")
    p.add_argument("--b", type=int, help="block dimension")
    p.add_argument("--dag", help="DAG interchange file instead of a Cholesky spec")
    p.add_argument("--exact-flops", action="store_true", help="include lower-order flop terms")


def _add_sched_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--work-stealing", choices=[BIG_ONLY, BIDIRECTIONAL], default=BIG_ONLY)
    p.add_argument("--blevel-weights", choices=["unit", "flops"], default="unit")
    p.add_argument("--random-tiebreak", action="store_true", help="seeded random ties instead of task id")
    p.add_argument("--retime-dvfs", action="store_true", help="re-time running tasks on frequency changes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ampsched", description=__doc__)
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-dag", help="write a task DAG in interchange format")
    _add_globals(p, suppress=True)
    _add_dag_source(p)
    p.add_argument("--random", type=int, metavar="N", help="random GENERIC DAG with N tasks")
    p.add_argument("--edge-prob", type=float, default=0.1)
    p.add_argument("--output", help="output file (default <out>/dag.json)")

    p = sub.add_parser("simulate", help="run one simulation")
    _add_globals(p, suppress=True)
    _add_dag_source(p)
    _add_sched_options(p)
    p.add_argument("--policy", choices=ALL_POLICIES, default="pbotlev")
    p.add_argument("--n-thres", type=float, help="TS threshold, percent of N_max")
    p.add_argument("--hysteresis", type=float, default=0.0, help="TS re-enable band, percentage points")
    p.add_argument("--emit-trace", action="store_true", help="write trace.csv")
    p.add_argument("--emit-series", action="store_true", help="write series.csv")
    p.add_argument("--repetitions", type=int, default=1, help="repeat to time the simulator itself")

    p = sub.add_parser("sweep", help="policy x problem-size grid against the PBOTLEV baseline")
    _add_globals(p, suppress=True)
    _add_sched_options(p)
    p.add_argument("--grid", type=_parse_grid, default=DEFAULT_GRID, help="M:B,M:B,...")
    p.add_argument("--policies", type=_csv_list, default=ALL_POLICIES)
    p.add_argument("--thresholds", type=lambda s: [float(x) for x in _csv_list(s)], default=DEFAULT_THRESHOLDS)

    p = sub.add_parser("report", help="render the tables of a sweep JSON")
    _add_globals(p, suppress=True)
    p.add_argument("--input", help="sweep JSON (default <out>/sweep.json)")
    return parser


def _platform(args) -> PlatformModel:
    return load_platform(args.platform) if args.platform else default_platform()


def _dag_from_args(args):
    if args.dag:
        if args.m is not None or args.b is not None:
            raise ConfigError("give either --dag or --m/--b, not both")
        return load_dag(args.dag)
    if args.m is None or args.b is None:
        raise ConfigError("--m and --b are required unless --dag is given")
    return generate_cholesky(CholeskySpec(args.m, args.b), exact_flops=args.exact_flops)


def _sched_config(args) -> SchedulerConfig:
    return SchedulerConfig(
        work_stealing=args.work_stealing,
        blevel_weights=args.blevel_weights,
        random_tiebreak=args.random_tiebreak,
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_dag(args) -> int:
    if args.random is not None:
        if args.m is not None or args.b is not None or args.dag:
            raise ConfigError("--random excludes --m/--b/--dag")
        g = generate_random(args.random, args.edge_prob, args.seed)
    else:
        g = _dag_from_args(args)
    path = Path(args.output) if args.output else _out_dir(args) / "dag.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dag(g, path)
    print(f"wrote {path}: tasks={len(g)} edges={len(g.edges)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    platform = _platform(args)
    g = _dag_from_args(args)
    policy = PolicyConfig(PolicyKind(args.policy), args.n_thres, args.hysteresis)
    sched = _sched_config(args)
    if args.repetitions < 1:
        raise ConfigError("--repetitions must be >= 1")
    t0 = time.perf_counter()
    for _ in range(args.repetitions):
        result = simulate(g, platform, sched, policy, args.seed, retime_on_dvfs=args.retime_dvfs)
    wall = (time.perf_counter() - t0) / args.repetitions
    out = _out_dir(args)
    (out / "summary.json").write_text(result.to_json() + "\n")
    if args.emit_trace:
        result.write_trace_csv(out / "trace.csv")
    if args.emit_series:
        result.write_series_csv(out / "series.csv")
    print(result.to_json())
    if args.repetitions > 1:
        print(f"simulator wall time: {wall * 1e3:.3f} ms/run over {args.repetitions} runs", file=sys.stderr)
    return EXIT_OK


# -- sweep --------------------------------------------------------------


def _run_cell(cell: tuple) -> dict:
    m, b, policy, thres, platform_doc, sched_kw, seed, retime = cell
    entry = {"m": m, "b": b, "policy": policy, "n_thres_pct": thres}
    try:
        g = generate_cholesky(CholeskySpec(m, b))
        result = simulate(
            g,
            platform_from_dict(platform_doc),
            SchedulerConfig(**sched_kw),
            PolicyConfig(PolicyKind(policy), thres),
            seed,
            retime_on_dvfs=retime,
        )
        entry.update(ok=True, summary=result.summary())
    except (*CONFIG_ERRORS, *RUNTIME_ERRORS) as exc:
        entry.update(ok=False, error=f"{type(exc).__name__}: {exc}")
    return entry


def _delta(base: float, value: float) -> dict:
    d = value - base
    return {"baseline": base, "policy": value, "delta": d, "pct": 100.0 * d / base if base else 0.0}


def run_sweep(
    grid: Sequence[tuple[int, int]],
    policies: Sequence[str],
    thresholds: Sequence[float],
    platform: PlatformModel,
    sched: SchedulerConfig,
    seed: int = 0,
    workers: int = 1,
    retime: bool = False,
) -> dict:
    pkinds = [PolicyKind(p) for p in policies]
    configs = []
    for k in pkinds:
        if k.is_ts:
            configs.extend((k.value, float(t)) for t in thresholds)
        else:
            configs.append((k.value, None))
    if ("pbotlev", None) not in configs:
        configs.insert(0, ("pbotlev", None))
    pdoc = platform_to_dict(platform)
    skw = {"work_stealing": sched.work_stealing, "blevel_weights": sched.blevel_weights,
           "random_tiebreak": sched.random_tiebreak}
    cells = [(m, b, pol, th, pdoc, skw, seed, retime) for (m, b) in grid for (pol, th) in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_cell, cells))
    else:
        runs = [_run_cell(c) for c in cells]

    baseline = {(r["m"], r["b"]): r for r in runs if r["policy"] == "pbotlev"}
    deltas = []
    for r in runs:
        base = baseline[(r["m"], r["b"])]
        label = PolicyConfig(PolicyKind(r["policy"]), r["n_thres_pct"]).label
        entry = {"m": r["m"], "b": r["b"], "policy": r["policy"], "n_thres_pct": r["n_thres_pct"], "label": label}
        if r["ok"] and base["ok"]:
            for key in ("gflops_per_watt", "avg_power_w", "gflops"):
                entry[key] = _delta(base["summary"][key], r["summary"][key])
            entry["ok"] = True
        else:
            entry["ok"] = False
            entry["error"] = r.get("error") or base.get("error")
        deltas.append(entry)

    little = platform.clusters[platform.find_role("little")].name if platform.find_role("little") is not None else None
    unusable = []
    for r in runs:
        if r["policy"] == "ts1" and r["ok"] and little is not None:
            unusable.append({"m": r["m"], "b": r["b"], "n_thres_pct": r["n_thres_pct"],
                             "pct_time_unusable": r["summary"]["pct_time_unusable"][little]})
    return {
        "platform": platform.name,
        "grid": [list(c) for c in grid],
        "policies": [label for label in dict.fromkeys(d["label"] for d in deltas)],
        "runs": runs,
        "deltas": deltas,
        "ts1_little_unusable": unusable,
    }


def _format_table(title: str, grid: Sequence[Sequence[int]], rows: list[tuple[str, list]], fmt: str) -> str:
    width = max(8, max((len(f"{x:{fmt}}") for _, vals in rows for x in vals if x is not None), default=8) + 1)
    lw = max([len("(m)")] + [len(name) for name, _ in rows]) + 1
    lines = [title, "-" * (lw + width * len(grid))]
    lines.append("(m)".rjust(lw) + "".join(str(m).rjust(width) for m, _ in grid))
    lines.append("(b)".rjust(lw) + "".join(str(b).rjust(width) for _, b in grid))
    lines.append("-" * (lw + width * len(grid)))
    for name, vals in rows:
        cells = ["n/a".rjust(width) if v is None else f"{v:{fmt}}".rjust(width) for v in vals]
        lines.append(name.ljust(lw) + "".join(cells))
    return "\n".join(lines)


def render_report(sweep: dict) -> str:
    grid = [tuple(c) for c in sweep["grid"]]
    by_label: dict[str, dict] = {}
    for d in sweep["deltas"]:
        by_label.setdefault(d["label"], {})[(d["m"], d["b"])] = d
    labels = [lb for lb in sweep["policies"] if lb != "pbotlev"] or ["pbotlev"]

    def rows(metric, field):
        out = []
        for lb in labels:
            cells = by_label.get(lb, {})
            out.append((lb, [cells[c][metric][field] if c in cells and cells[c]["ok"] else None for c in grid]))
        return out

    parts = [
        _format_table("Energy efficiency change vs PBOTLEV (GFLOPS/W, policy - baseline)",
                      grid, rows("gflops_per_watt", "delta"), "+.3f"),
        _format_table("Energy efficiency change vs PBOTLEV (%)", grid, rows("gflops_per_watt", "pct"), "+.2f"),
        _format_table("Average power change vs PBOTLEV (W, policy - baseline; negative = saving)",
                      grid, rows("avg_power_w", "delta"), "+.3f"),
        _format_table("Average power change vs PBOTLEV (%)", grid, rows("avg_power_w", "pct"), "+.2f"),
    ]
    if sweep.get("ts1_little_unusable"):
        cells: dict[float, dict] = {}
        for u in sweep["ts1_little_unusable"]:
            cells.setdefault(u["n_thres_pct"], {})[(u["m"], u["b"])] = u["pct_time_unusable"]
        trows = [(f"{t:g}%", [cells[t].get(c) for c in grid]) for t in sorted(cells, reverse=True)]
        parts.append(_format_table("Time the LITTLE cluster is unusable under TS1 (% of makespan)", grid, trows, ".2f"))
    failed = [d for d in sweep["deltas"] if not d["ok"]]
    if failed:
        parts.append("Failed cells:\n" + "\n".join(f"  {d['label']} m={d['m']} b={d['b']}: {d['error']}" for d in failed))
    return "\n\n".join(parts) + "\n"


def cmd_sweep(args) -> int:
    platform = _platform(args)
    for p in args.policies:
        PolicyKind(p)
    if not args.grid or not args.policies:
        raise ConfigError("grid and policy lists must be nonempty")
    if any(k.is_ts for k in map(PolicyKind, args.policies)) and not args.thresholds:
        raise ConfigError("TS policies need at least one threshold")
    for m, b in args.grid:
        CholeskySpec(m, b)
    sweep = run_sweep(args.grid, args.policies, args.thresholds, platform, _sched_config(args),
                      args.seed, args.workers, args.retime_dvfs)
    out = _out_dir(args)
    (out / "sweep.json").write_text(json.dumps(sweep, indent=1, sort_keys=True) + "\n")
    report = render_report(sweep)
    (out / "report.txt").write_text(report)
    print(report, end="")
    failed = sum(not r["ok"] for r in sweep["runs"])
    if failed:
        print(f"{failed} sweep cell(s) failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.input) if args.input else Path(args.out) / "sweep.json"
    try:
        sweep = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    print(render_report(sweep), end="")
    return EXIT_OK


COMMANDS = {"gen-dag": cmd_gen_dag, "simulate": cmd_simulate, "sweep": cmd_sweep, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, *CONFIG_ERRORS) as exc:
        print(f"ampsched: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RUNTIME_ERRORS as exc:
        print(f"ampsched: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
