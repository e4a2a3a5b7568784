"""Closed-loop scenario runner, trajectory log and metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .aic import ActiveInferenceController, AicConfig
from .errors import ConfigError, DivergenceError, SimulationError
from .free_energy import SensoryReading, as_joint_vector
from .mrac import ModelReferenceAdaptiveController, MracConfig
from .plant import Plant, PlantState, Sensor, SensorNoise

MAX_JOINT_SPEED = 50.0
SETTLE_FRACTION = 0.02
SETTLE_FLOOR = 0.01
STEADY_WINDOW = 0.1


@dataclass
class Scenario:
    plant: object
    controller: str
    controller_config: AicConfig | MracConfig
    schedule: list[tuple[float, np.ndarray]]
    duration: float
    noise: SensorNoise = field(default_factory=SensorNoise)
    initial_q: np.ndarray | None = None
    initial_qd: np.ndarray | None = None
    events: list = field(default_factory=list)
    dt: float = 1e-3
    labels: list[str] | None = None
    name: str = "scenario"

    def __post_init__(self):
        n = self.plant.n
        if self.controller not in ("aic", "mrac"):
            raise ConfigError(f"unknown controller kind {self.controller!r}", field="controller")
        expected = AicConfig if self.controller == "aic" else MracConfig
        if not isinstance(self.controller_config, expected):
            raise ConfigError(f"{self.controller} needs a {expected.__name__}", field="controller")
        if self.controller == "mrac" and self.controller_config.n != n:
            raise ConfigError(f"MRAC weights sized for {self.controller_config.n} joints, plant has {n}", field="controller")
        if abs(self.controller_config.dt - self.dt) > 1e-15:
            raise ConfigError("controller dt must equal the scenario tick", field="dt")
        self.schedule = [(float(t), as_joint_vector(g, n, "set-point")) for t, g in self.schedule]
        times = [t for t, _ in self.schedule]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("schedule times must be strictly increasing", field="schedule")
        if times and (times[0] < 0 or self.duration < times[-1]):
            raise ConfigError("schedule must lie within [0, duration]", field="schedule")
        if self.duration < 0:
            raise ConfigError("duration must be non-negative", field="duration")
        self.initial_q = np.zeros(n) if self.initial_q is None else as_joint_vector(self.initial_q, n, "initial_q")
        self.initial_qd = np.zeros(n) if self.initial_qd is None else as_joint_vector(self.initial_qd, n, "initial_qd")
        if self.labels is not None and len(self.labels) != len(self.schedule):
            raise ConfigError("one label per set-point required", field="labels")

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))

    def with_controller(self, kind: str, cfg) -> Scenario:
        return replace(self, controller=kind, controller_config=cfg)


@dataclass
class TrajectoryLog:
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    y_q: np.ndarray
    y_qd: np.ndarray
    mu: np.ndarray
    mu_p: np.ndarray
    mu_pp: np.ndarray
    u: np.ndarray
    free_energy: np.ndarray
    setpoint: np.ndarray
    step_us: np.ndarray
    controller: str = "aic"
    diverged: bool = False
    stop_reason: str | None = None
    stop_time: float | None = None

    def __len__(self):
        return self.t.size

    @property
    def n(self) -> int:
        return self.q.shape[1]


def make_controller(kind: str, cfg):
    if kind == "aic":
        return ActiveInferenceController(cfg)
    if kind == "mrac":
        return ModelReferenceAdaptiveController(cfg)
    raise ConfigError(f"unknown controller kind {kind!r}", field="controller")


def run(scenario: Scenario, wall_clock: bool = True) -> TrajectoryLog:
    """Co-simulate plant and controller at the scenario tick.

    A controller or plant divergence ends the run early; the rows recorded up
    to that point are kept and the log is flagged as a safety stop.
    """
    n, dt = scenario.n, scenario.dt
    ticks = scenario.n_ticks
    is_aic = scenario.controller == "aic"
    cols = {name: np.full((ticks, n), np.nan) for name in ("q", "qd", "y_q", "y_qd", "mu", "mu_p", "mu_pp", "u")}
    F = np.full(ticks, np.nan)
    sp = np.full(ticks, -1, dtype=int)
    step_us = np.full(ticks, np.nan)

    plant = Plant(scenario.plant, PlantState(scenario.initial_q.copy(), scenario.initial_qd.copy()), list(scenario.events))
    sensor = Sensor(scenario.noise)
    ctrl = make_controller(scenario.controller, scenario.controller_config)
    schedule = scenario.schedule
    next_sp = 0
    goal = scenario.initial_q.copy()
    active = -1
    diverged, reason, stop_time = False, None, None
    recorded = 0
    clock = time.perf_counter

    for k in range(ticks):
        t = k * dt
        plant.apply_due_events(t)
        changed = False
        while next_sp < len(schedule) and schedule[next_sp][0] <= t + 1e-9:
            goal = schedule[next_sp][1]
            active = next_sp
            next_sp += 1
            changed = True
        state = plant.state
        y_q, y_qd = sensor.read_arrays(state)
        try:
            if k == 0:
                ctrl.reset(SensoryReading(y_q, y_qd), goal)
            elif changed:
                ctrl.set_goal(goal)
            t0 = clock()
            u = ctrl.step(y_q, y_qd)
            elapsed = clock() - t0
        except DivergenceError as exc:
            diverged, reason, stop_time = True, f"controller: {exc}", t
            break
        cols["q"][k] = state.q
        cols["qd"][k] = state.qd
        cols["y_q"][k] = y_q
        cols["y_qd"][k] = y_qd
        cols["u"][k] = u
        if is_aic:
            mu, mu_p, mu_pp = ctrl.belief_arrays()
            cols["mu"][k] = mu
            cols["mu_p"][k] = mu_p
            cols["mu_pp"][k] = mu_pp
            F[k] = ctrl.free_energy(y_q, y_qd)
        sp[k] = active
        if wall_clock:
            step_us[k] = elapsed * 1e6
        recorded = k + 1
        try:
            new = plant.advance(u, dt)
        except (DivergenceError, SimulationError) as exc:
            diverged, reason, stop_time = True, f"plant: {exc}", t + dt
            break
        if np.max(np.abs(new.qd)) > MAX_JOINT_SPEED:
            j = int(np.argmax(np.abs(new.qd)))
            diverged, reason, stop_time = True, f"safety stop: joint {j} speed {abs(new.qd[j]):.1f} rad/s", t + dt
            break

    sl = slice(0, recorded)
    return TrajectoryLog(
        t=np.arange(recorded) * dt,
        **{name: arr[sl] for name, arr in cols.items()},
        free_energy=F[sl],
        setpoint=sp[sl],
        step_us=step_us[sl],
        controller=scenario.controller,
        diverged=diverged,
        stop_reason=reason,
        stop_time=stop_time,
    )


# ---------------------------------------------------------------- metrics


def _segment_bounds(scenario: Scenario):
    out = []
    times = [t for t, _ in scenario.schedule] + [scenario.duration]
    for i, (t0, goal) in enumerate(scenario.schedule):
        out.append((i, t0, times[i + 1], goal))
    return out


def torque_jitter(u: np.ndarray) -> float:
    """Mean absolute second difference of the torque, over time and joints."""
    if u.shape[0] < 3:
        return 0.0
    return float(np.mean(np.abs(u[2:] - 2 * u[1:-1] + u[:-2])))


def segment_metrics(t, q, goal, q_start, t_start, t_end, complete: bool):
    """Step-response figures for one joint over one set-point segment."""
    step = goal - q_start
    err = q - goal
    band = max(SETTLE_FRACTION * abs(step), SETTLE_FLOOR)
    rel_t = t - t_start
    if q.size == 0:
        return dict(rise_time=None, settling_time=None, overshoot=0.0, steady_state_error=None, settled=False)
    if abs(step) > band:
        progress = (q - q_start) / step
        hi = np.flatnonzero(progress >= 0.9)
        lo = np.flatnonzero(progress >= 0.1)
        rise = float(rel_t[hi[0]] - rel_t[lo[0]]) if hi.size else None
        overshoot = float(max(0.0, np.max(err * np.sign(step))))
    else:
        rise = 0.0
        overshoot = float(np.max(np.abs(err)))
    outside = np.flatnonzero(np.abs(err) > band)
    if not complete or (outside.size and outside[-1] == q.size - 1):
        settling, settled = None, False
    else:
        settling = 0.0 if outside.size == 0 else float(rel_t[outside[-1] + 1])
        settled = True
    window = rel_t >= (t_end - t_start) - STEADY_WINDOW - 1e-9
    sse = float(np.mean(np.abs(err[window]))) if complete and np.any(window) else None
    return dict(rise_time=rise, settling_time=settling, overshoot=overshoot, steady_state_error=sse, settled=settled)


def compute_metrics(log: TrajectoryLog, scenario: Scenario) -> dict:
    """Deterministic summary of a run; wall-time figures are kept separate."""
    dt = scenario.dt
    segments = []
    labels = scenario.labels or [f"sp{i}" for i in range(len(scenario.schedule))]
    for i, t0, t1, goal in _segment_bounds(scenario):
        k0, k1 = int(round(t0 / dt)), int(round(t1 / dt))
        complete = k1 <= len(log)
        sl = slice(k0, min(k1, len(log)))
        t = log.t[sl]
        joints = []
        q_start = log.q[k0] if k0 < len(log) else None
        for j in range(log.n):
            if q_start is None:
                joints.append(dict(rise_time=None, settling_time=None, overshoot=0.0, steady_state_error=None, settled=False))
                continue
            joints.append(segment_metrics(t, log.q[sl, j], goal[j], q_start[j], t0, t1, complete))
        segments.append(
            dict(
                index=i,
                label=labels[i],
                t_start=t0,
                t_end=t1,
                goal=goal.tolist(),
                settled=all(jm["settled"] for jm in joints),
                settling_time=max((jm["settling_time"] for jm in joints if jm["settling_time"] is not None), default=None)
                if all(jm["settled"] for jm in joints)
                else None,
                jitter=torque_jitter(log.u[sl]),
                joints=joints,
            )
        )
    active = log.setpoint >= 0
    goals = np.array([g for _, g in scenario.schedule]) if scenario.schedule else np.zeros((0, log.n))
    if np.any(active):
        ref = goals[log.setpoint[active]]
        rmse = float(np.sqrt(np.mean((log.q[active] - ref) ** 2)))
    else:
        rmse = None
    limit = scenario.controller_config.torque_limit
    u = log.u
    return dict(
        controller=scenario.controller,
        scenario=scenario.name,
        n=log.n,
        ticks=len(log),
        diverged=log.diverged,
        stop_reason=log.stop_reason,
        stop_time=log.stop_time,
        all_settled=bool(segments) and all(s["settled"] for s in segments),
        tracking_rmse=rmse,
        peak_torque=float(np.max(np.abs(u))) if len(log) else 0.0,
        saturation_duty=float(np.mean(np.any(np.abs(u) >= limit - 1e-12, axis=1))) if len(log) else 0.0,
        jitter=torque_jitter(u),
        parameter_count=scenario.controller_config.parameter_count(),
        segments=segments,
    )


def timing_summary(log: TrajectoryLog) -> dict:
    s = log.step_us[np.isfinite(log.step_us)]
    if s.size == 0:
        return dict(mean_step_us=None, max_step_us=None)
    return dict(mean_step_us=float(np.mean(s)), max_step_us=float(np.max(s)))
