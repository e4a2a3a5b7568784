"""Stable on-disk formats: trajectory CSV, metrics JSON, text summary, timing CSV.

Every float is printed with 9 significant digits so two identical runs give
byte-identical files. Files are written to a temporary sibling and renamed.
"""

from __future__ import annotations

import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .harness import TrajectoryLog

SIG_FMT = "%.9g"
JOINT_BLOCKS = ("q", "qd", "y_q", "y_qd", "mu", "mu_p", "mu_pp", "u")
TIMING_COLUMNS = ("controller", "n", "steps", "mean_us", "p50_us", "p95_us", "p99_us", "max_us", "parameter_count", "diverged")


def trajectory_columns(n: int) -> list[str]:
    cols = ["t"]
    for block in JOINT_BLOCKS:
        cols += [f"{block}_{j}" for j in range(n)]
    return cols + ["F", "setpoint", "step_us"]


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def trajectory_csv(log: TrajectoryLog) -> str:
    n = log.n
    header = ",".join(trajectory_columns(n))
    buf = io.StringIO()
    buf.write(header + "\n")
    if len(log):
        floats = np.column_stack([log.t] + [getattr(log, b) for b in JOINT_BLOCKS] + [log.free_energy])
        table = np.column_stack([floats, log.setpoint.astype(float), log.step_us])
        fmt = [SIG_FMT] * floats.shape[1] + ["%d", SIG_FMT]
        np.savetxt(buf, table, fmt=fmt, delimiter=",")
    return buf.getvalue()


def _clean(value):
    """JSON-safe copy with 9-significant-digit floats and NaN mapped to null."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return None
        return float(SIG_FMT % v)
    return value


def metrics_json(metrics: dict) -> str:
    return json.dumps(_clean(metrics), indent=2, sort_keys=False) + "\n"


def _fmt(value, unit=""):
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4g}{unit}"
    return f"{value}{unit}"


def summary_text(metrics: dict) -> str:
    lines = [
        f"scenario     {metrics['scenario']}",
        f"controller   {metrics['controller']}  ({metrics['parameter_count']} tuning parameters, n={metrics['n']})",
        f"ticks        {metrics['ticks']}",
        f"outcome      {'SAFETY STOP: ' + str(metrics['stop_reason']) if metrics['diverged'] else 'completed'}",
        f"all settled  {_fmt(metrics['all_settled'])}",
        f"RMSE         {_fmt(metrics['tracking_rmse'], ' rad')}",
        f"peak |u|     {_fmt(metrics['peak_torque'], ' Nm')}",
        f"saturation   {_fmt(metrics['saturation_duty'])}",
        f"jitter       {_fmt(metrics['jitter'], ' Nm')}",
    ]
    timing = metrics.get("timing")
    if timing and timing.get("mean_step_us") is not None:
        lines.append(f"step time    mean {timing['mean_step_us']:.2f} us, max {timing['max_step_us']:.2f} us")
    lines.append("")
    lines.append(f"{'segment':<10}{'t0':>6}  {'settled':>7}  {'t_settle':>8}  {'worst sse':>9}  {'overshoot':>9}")
    for seg in metrics["segments"]:
        sse = [j["steady_state_error"] for j in seg["joints"] if j["steady_state_error"] is not None]
        over = max((j["overshoot"] for j in seg["joints"]), default=0.0)
        lines.append(
            f"{seg['label']:<10}{seg['t_start']:>6.1f}  {_fmt(seg['settled']):>7}  "
            f"{_fmt(seg['settling_time']):>8}  {_fmt(max(sse) if sse else None):>9}  {_fmt(over):>9}"
        )
    return "\n".join(lines) + "\n"


def timing_csv(rows: list[dict]) -> str:
    out = [",".join(TIMING_COLUMNS)]
    for r in rows:
        cells = []
        for c in TIMING_COLUMNS:
            v = r[c]
            cells.append(SIG_FMT % v if isinstance(v, float) else str(int(v) if isinstance(v, bool) else v))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def read_trajectory_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open() as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
