"""Command-line front end.

    aicsim run CONFIG [--out DIR] [--seed N] [--duration S] [--controller aic|mrac]
    aicsim compare CONFIG_A CONFIG_B [--out DIR] [--seed N] [--duration S]
    aicsim bench --dofs 2,8,32,64 [--steps 100000] [--out DIR]
    aicsim experiment transfer|payload [--seed N] [--out DIR]
    aicsim list

Exit codes: 0 success, 1 config or usage error, 2 divergence (safety stop),
3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import bundled_scenarios, load_scenario
from .errors import ConfigError, ContractError
from .harness import compute_metrics, run, timing_summary
from .output import atomic_write, metrics_json, summary_text, timing_csv, trajectory_csv

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("aicsim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _dofs(text: str) -> list[int]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise argparse.ArgumentTypeError("expected a non-empty comma-separated list of joint counts")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("joint counts must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aicsim", description="Active inference vs MRAC joint-space control simulator.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one scenario file or bundled scenario name")
    r.add_argument("config")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float)
    r.add_argument("--controller", choices=("aic", "mrac"), help="swap the controller, keeping its bundled preset")
    r.add_argument("--wall-clock", action="store_true", help="record per-step wall time (makes the CSV non-reproducible)")

    c = sub.add_parser("compare", help="run two scenarios on a shared plant, schedule and seed")
    c.add_argument("config_a")
    c.add_argument("config_b")
    c.add_argument("--out", default="out")
    c.add_argument("--seed", type=int)
    c.add_argument("--duration", type=float)

    b = sub.add_parser("bench", help="controller step-time table")
    b.add_argument("--dofs", type=_dofs, required=True)
    b.add_argument("--steps", type=int, default=100_000)
    b.add_argument("--controllers", default="aic,mrac")
    b.add_argument("--out", default="out")

    e = sub.add_parser("experiment", help="built-in paired experiments")
    e.add_argument("name", choices=("transfer", "payload"))
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="out")

    sub.add_parser("list", help="list bundled scenarios")
    return p


def _write_run(out: Path, log_, metrics) -> None:
    atomic_write(out / "trajectory.csv", trajectory_csv(log_))
    atomic_write(out / "metrics.json", metrics_json(metrics))
    atomic_write(out / "summary.txt", summary_text(metrics))


def _execute(scenario, wall_clock: bool):
    log_ = run(scenario, wall_clock=wall_clock)
    metrics = compute_metrics(log_, scenario)
    if wall_clock:
        metrics["timing"] = timing_summary(log_)
    return log_, metrics


def cmd_run(args) -> int:
    overrides = dict(seed=args.seed, duration=args.duration, controller=args.controller)
    scenario = load_scenario(args.config, overrides)
    log.info("running %s (%s, n=%d, %.1f s)", scenario.name, scenario.controller, scenario.n, scenario.duration)
    log_, metrics = _execute(scenario, args.wall_clock)
    out = Path(args.out)
    _write_run(out, log_, metrics)
    print(summary_text(metrics), end="")
    print(f"wrote {out / 'trajectory.csv'}, {out / 'metrics.json'}, {out / 'summary.txt'}")
    if metrics["diverged"]:
        print(f"safety stop: {metrics['stop_reason']}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def degraded_segments(own: dict, other: dict, factor: float = 3.0) -> list[str]:
    """Segments unsettled or settling more than ``factor`` times slower than the other run."""
    bad = []
    for a, b in zip(own["segments"], other["segments"]):
        if not a["settled"]:
            bad.append(a["label"])
        elif b["settled"] and b["settling_time"] and a["settling_time"] > factor * b["settling_time"]:
            bad.append(a["label"])
    return bad


COMPARE_ROWS = (
    ("controller", "controller"),
    ("tuning parameters", "parameter_count"),
    ("diverged", "diverged"),
    ("all settled", "all_settled"),
    ("tracking RMSE [rad]", "tracking_rmse"),
    ("peak |u| [Nm]", "peak_torque"),
    ("saturation duty", "saturation_duty"),
    ("jitter [Nm]", "jitter"),
)


def compare_table(ma: dict, mb: dict) -> list[tuple[str, str, str]]:
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return "%.9g" % v
        return str(v).lower() if isinstance(v, bool) else str(v)

    rows = [(label, cell(ma[key]), cell(mb[key])) for label, key in COMPARE_ROWS]
    for sa, sb in zip(ma["segments"], mb["segments"]):
        rows.append((f"settling {sa['label']} [s]", cell(sa["settling_time"]), cell(sb["settling_time"])))
    rows.append(("degraded segments", ";".join(degraded_segments(ma, mb)) or "-", ";".join(degraded_segments(mb, ma)) or "-"))
    return rows


def cmd_compare(args) -> int:
    overrides = dict(seed=args.seed, duration=args.duration)
    sa = load_scenario(args.config_a, overrides)
    sb_own = load_scenario(args.config_b, overrides)
    # Fairness: B borrows everything except its controller from A.
    sb = replace(sa, controller=sb_own.controller, controller_config=sb_own.controller_config, name=sb_own.name)
    if sb_own.plant != sa.plant or sb_own.noise != sa.noise:
        print(f"note: {sb_own.name} runs on the plant, schedule and noise of {sa.name}", file=sys.stderr)
    if sa.controller_config.torque_limit != sb.controller_config.torque_limit:
        print("note: torque limits differ between the two controllers", file=sys.stderr)
    out = Path(args.out)
    results = []
    for tag, sc in (("a", sa), ("b", sb)):
        log_, metrics = _execute(sc, False)
        _write_run(out / tag, log_, metrics)
        results.append(metrics)
    ma, mb = results
    rows = compare_table(ma, mb)
    head = ("metric", sa.name, sb.name)
    width = max(len(r[0]) for r in rows) + 2
    text = "\n".join(f"{r[0]:<{width}}{r[1]:>16}  {r[2]:>16}" for r in [head] + rows) + "\n"
    csv = "\n".join(",".join(r) for r in [head] + rows) + "\n"
    atomic_write(out / "compare.csv", csv)
    atomic_write(out / "compare.txt", text)
    print(text, end="")
    return EXIT_DIVERGED if ma["diverged"] or mb["diverged"] else EXIT_OK


def cmd_bench(args) -> int:
    kinds = tuple(k for k in args.controllers.split(",") if k)
    if not kinds or any(k not in ("aic", "mrac") for k in kinds):
        raise ConfigError(f"--controllers must list aic and/or mrac, got {args.controllers!r}")
    if args.steps < 1:
        raise ConfigError("--steps must be positive")
    rows = ex.timing_benchmark(args.dofs, steps=args.steps, kinds=kinds)
    path = atomic_write(Path(args.out) / "timing.csv", timing_csv(rows))
    print(f"host: {platform.machine()} {platform.processor() or platform.system()}, Python {platform.python_version()}, numpy {np.__version__}")
    print(f"{'controller':<11}{'n':>4}{'params':>8}{'mean us':>10}{'p50':>9}{'p99':>9}{'max':>10}")
    for r in rows:
        print(
            f"{r['controller']:<11}{r['n']:>4}{r['parameter_count']:>8}{r['mean_us']:>10.2f}"
            f"{r['p50_us']:>9.2f}{r['p99_us']:>9.2f}{r['max_us']:>10.1f}"
        )
    print(f"wrote {path}")
    return EXIT_DIVERGED if any(r["diverged"] for r in rows) else EXIT_OK


def cmd_experiment(args) -> int:
    out = Path(args.out)
    if args.name == "transfer":
        res = ex.transfer_experiment(seed=args.seed)
        summary = {
            k: dict(
                diverged=v["diverged"],
                tune_settling=[s["settling_time"] for s in v["tune"]["segments"]],
                test_settling=[s["settling_time"] for s in v["test"]["segments"]],
                test_jitter=v["test"]["jitter"],
            )
            for k, v in res.items()
        }
        summary["mrac"]["degraded_segments"] = degraded_segments(res["mrac"]["test"], res["aic"]["test"])
        atomic_write(out / "transfer.json", metrics_json(summary))
        for k, v in summary.items():
            print(f"{k:<5} diverged={v['diverged']}  test settling={v['test_settling']}")
        print(f"wrote {out / 'transfer.json'}")
        return EXIT_OK
    body = {}
    for kind in ("aic", "mrac"):
        res = ex.payload_experiment(kind, seed=args.seed)
        body[kind] = res["segments"]
        rows = np.column_stack([res["t"], res["difference"]])
        lines = ["t,difference"] + [f"{t:.9g},{d:.9g}" for t, d in rows]
        atomic_write(out / f"payload_difference_{kind}.csv", "\n".join(lines) + "\n")
        for seg in res["segments"]:
            print(
                f"{kind:<5}{seg['label']:<9} peak {seg['peak']:.4g} rad  final {seg['final_mean']:.4g} rad  "
                f"jitter heavy {seg['heavy_jitter']:.4g}"
            )
    atomic_write(out / "payload.json", metrics_json(body))
    print(f"wrote {out}/payload.json and payload_difference_*.csv")
    return EXIT_OK


def cmd_list(args) -> int:
    for name, path in bundled_scenarios().items():
        print(f"{name:<22}{path}")
    return EXIT_OK


COMMANDS = dict(run=cmd_run, compare=cmd_compare, bench=cmd_bench, experiment=cmd_experiment, list=cmd_list)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
