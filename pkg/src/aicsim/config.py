"""Scenario files: YAML documents describing plant, controller, schedule and events.

Schema (all keys optional unless marked)::

    name: pick_place_aic
    duration: 30.0            # s
    dt: 0.001                 # s, control and integration tick
    seed: 0                   # sensor-noise stream
    noise: {std_q: 0.001, std_qd: 0.01}
    initial_q: [0.0, 0.0]
    plant:
      preset: nominal_2link   # default; or type: planar|decoupled with explicit fields
      links: [{mass: 3.0, length: 0.33}, ...]   # com/inertia default to a slender bar
      gravity: 9.81
      damping: [0.3, 0.3]
      payload_mass: 0.0
      gravity_compensated: false
      mass_perturbation: {fraction: 0.2, seed: 7}
    controller:               # required
      kind: aic               # aic | mrac
      preset: aic_sim         # start from a bundled preset, then override keys
      kappa_a: 200.0
    schedule:                 # required
      cycle: pick_place       # five set-points every 6 s, or:
      setpoints: [{t: 0.0, q: [0.5, -2.0], label: A}, ...]
      joints: [1, 3]          # which 7-DOF set-point entries drive the plant joints
    events:
      - {type: payload, t: 14.0, mass: 0.0}
      - {type: push, t: 8.0, duration: 0.2, torque: [5.0, 0.0]}
"""

from __future__ import annotations

from pathlib import Path

import yaml

from . import experiments as ex
from .aic import AicConfig
from .errors import ConfigError
from .harness import Scenario
from .mrac import MracConfig
from .plant import DecoupledArmModel, Link, PayloadEvent, PlanarArmModel, PushEvent, SensorNoise, perturb_masses

SCENARIO_DIR = Path(__file__).parent / "scenarios"
TOP_LEVEL_KEYS = {"name", "duration", "dt", "seed", "noise", "initial_q", "plant", "controller", "schedule", "events"}


def bundled_scenarios() -> dict[str, Path]:
    return {p.stem: p for p in sorted(SCENARIO_DIR.glob("*.yaml"))}


def resolve_path(name_or_path) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = bundled_scenarios()
    if str(name_or_path) in bundled:
        return bundled[str(name_or_path)]
    raise FileNotFoundError(f"scenario file not found: {name_or_path}")


class _Locator:
    """Maps dotted field paths to source lines using the composed YAML tree."""

    def __init__(self, root):
        self.root = root

    def line(self, path: str):
        node = self.root
        if node is None:
            return None
        for part in path.split("."):
            if isinstance(node, yaml.MappingNode):
                match = [v for k, v in node.value if k.value == part]
                if not match:
                    break
                node = match[0]
            elif isinstance(node, yaml.SequenceNode) and part.isdigit() and int(part) < len(node.value):
                node = node.value[int(part)]
            else:
                break
        return node.start_mark.line + 1


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    path = resolve_path(path)
    text = path.read_text()
    try:
        tree = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"{path}: malformed YAML: {exc.problem}", line=mark.line + 1 if mark else None) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping", line=1)
    loc = _Locator(tree)
    try:
        return scenario_from_dict(data, overrides or {})
    except ConfigError as exc:
        if exc.line is None and exc.field is not None:
            exc.line = loc.line(exc.field)
            exc.args = (f"{exc.args[0]} (line {exc.line})",)
        raise


def _num(d, key, default, path):
    value = d.get(key, default)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", field=f"{path}.{key}" if path else key) from None


def _section(data, key, required=False):
    sec = data.get(key)
    if sec is None:
        if required:
            raise ConfigError(f"missing required section '{key}'", field=key)
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section '{key}' must be a mapping", field=key)
    return sec


def build_plant(sec: dict):
    sec = dict(sec) or {"preset": "nominal_2link"}
    preset = sec.pop("preset", None)
    perturb = sec.pop("mass_perturbation", None)
    kind = sec.pop("type", "planar")
    if preset is not None:
        if preset not in ex.PLANT_PRESETS:
            raise ConfigError(f"unknown plant preset {preset!r}", field="plant.preset")
        base = ex.PLANT_PRESETS[preset]()
    elif kind == "planar":
        links = sec.pop("links", None)
        if not links:
            raise ConfigError("planar plant needs 'links'", field="plant.links")
        built = []
        for i, l in enumerate(links):
            try:
                if "inertia" in l:
                    built.append(Link(float(l["mass"]), float(l["length"]), float(l.get("com", l["length"] / 2)), float(l["inertia"])))
                else:
                    built.append(Link.cuboid(float(l["mass"]), float(l["length"]), l.get("com")))
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"link {i} needs numeric mass and length", field=f"plant.links.{i}") from exc
            except ConfigError as exc:
                raise ConfigError(str(exc.args[0]), field=f"plant.links.{i}") from None
        base = PlanarArmModel(links=tuple(built))
    elif kind == "decoupled":
        try:
            base = DecoupledArmModel(
                inertia=tuple(sec.pop("inertia")), damping=sec.pop("damping", None), bias=sec.pop("bias", None)
            )
        except KeyError:
            raise ConfigError("decoupled plant needs 'inertia'", field="plant.inertia") from None
    else:
        raise ConfigError(f"unknown plant type {kind!r}", field="plant.type")
    changes = {}
    for key in ("gravity", "payload_mass"):
        if key in sec:
            changes[key] = _num(sec, key, None, "plant")
    if "gravity_compensated" in sec:
        changes["gravity_compensated"] = bool(sec["gravity_compensated"])
    if "damping" in sec:
        changes["damping"] = tuple(sec["damping"]) if isinstance(sec["damping"], list) else sec["damping"]
    unknown = set(sec) - {"gravity", "payload_mass", "gravity_compensated", "damping", "links"}
    if unknown:
        raise ConfigError(f"unknown plant keys {sorted(unknown)}", field=f"plant.{sorted(unknown)[0]}")
    try:
        from dataclasses import replace

        plant = replace(base, **changes) if changes else base
    except (TypeError, ConfigError) as exc:
        raise ConfigError(f"invalid plant: {exc}", field="plant") from None
    if perturb:
        plant = perturb_masses(plant, _num(perturb, "fraction", 0.0, "plant.mass_perturbation"), int(perturb.get("seed", 0)))
    return plant


def build_controller(sec: dict, n: int, dt: float):
    sec = dict(sec)
    kind = sec.pop("kind", None)
    if kind not in ("aic", "mrac"):
        raise ConfigError(f"controller.kind must be 'aic' or 'mrac', got {kind!r}", field="controller.kind")
    preset = sec.pop("preset", None)
    try:
        if kind == "aic":
            base = ex.aic_preset(preset or "aic_sim")
            return kind, base.with_updates(dt=dt, **{k: float(v) for k, v in sec.items()})
        values = ex.mrac_preset_values(preset or "mrac_sim")
        values.update(sec)
        values["dt"] = dt
        return kind, MracConfig.uniform(n, **values)
    except KeyError as exc:
        raise ConfigError(f"unknown controller preset {preset!r}", field="controller.preset") from exc
    except TypeError as exc:
        raise ConfigError(f"invalid controller key: {exc}", field="controller") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise ConfigError(exc.args[0], field=f"controller.{exc.field}" if exc.field else "controller") from None
        raise ConfigError(f"invalid controller value: {exc}", field="controller") from None


def build_schedule(sec: dict, n: int):
    joints = sec.get("joints")
    if joints is None:
        joints = list(ex.DEFAULT_JOINTS) if n == len(ex.DEFAULT_JOINTS) else list(range(n))
    if "cycle" in sec:
        if sec["cycle"] != "pick_place":
            raise ConfigError(f"unknown cycle {sec['cycle']!r}", field="schedule.cycle")
        return ex.pick_place_schedule(joints, spacing=float(sec.get("spacing", ex.SETPOINT_SPACING)))
    points = sec.get("setpoints")
    if not points:
        raise ConfigError("schedule needs 'cycle' or 'setpoints'", field="schedule")
    sched, labels = [], []
    for i, p in enumerate(points):
        try:
            q = p["q"]
            default_label = q if isinstance(q, str) else f"sp{i}"
            if isinstance(q, str):
                q = [ex.PICK_PLACE_SETPOINTS[q][j] for j in joints]
            sched.append((float(p["t"]), q))
            labels.append(str(p.get("label", default_label)))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"set-point {i} needs 't' and 'q'", field=f"schedule.setpoints.{i}") from exc
    return sched, labels


def build_events(items) -> list:
    events = []
    for i, e in enumerate(items or []):
        kind = e.get("type") if isinstance(e, dict) else None
        try:
            if kind == "payload":
                events.append(PayloadEvent(float(e["t"]), float(e["mass"])))
            elif kind == "push":
                tq = e["torque"]
                events.append(PushEvent(float(e["t"]), float(e["duration"]), tuple(tq) if isinstance(tq, list) else (float(tq),)))
            else:
                raise ConfigError(f"event type must be 'payload' or 'push', got {kind!r}", field=f"events.{i}")
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"event {i} is missing {exc}", field=f"events.{i}") from None
        except ConfigError as exc:
            raise ConfigError(exc.args[0].split(" (")[0], field=f"events.{i}") from None
    return events


def scenario_from_dict(data: dict, overrides: dict | None = None) -> Scenario:
    """Build a scenario; ``overrides`` may set ``seed``, ``duration`` or ``controller``."""
    overrides = overrides or {}
    unknown = sorted(set(data) - TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}", field=unknown[0])
    plant = build_plant(_section(data, "plant"))
    n = plant.n
    dt = _num(data, "dt", 1e-3, "")
    ctrl_sec = dict(_section(data, "controller", required=True))
    if overrides.get("controller"):
        kind = overrides["controller"]
        if kind != ctrl_sec.get("kind"):
            ctrl_sec = {"kind": kind}
    kind, cfg = build_controller(ctrl_sec, n, dt)
    schedule, labels = build_schedule(_section(data, "schedule", required=True), n)
    noise_sec = _section(data, "noise")
    seed = int(overrides["seed"]) if overrides.get("seed") is not None else int(data.get("seed", 0))
    noise = SensorNoise(_num(noise_sec, "std_q", 0.0, "noise"), _num(noise_sec, "std_qd", 0.0, "noise"), seed)
    duration = float(overrides["duration"]) if overrides.get("duration") is not None else _num(data, "duration", None, "")
    if overrides.get("duration") is not None:
        schedule = [(t, q) for t, q in schedule if t <= duration]
        labels = labels[: len(schedule)]
    initial_q = data.get("initial_q")
    if isinstance(initial_q, str):
        joints = _section(data, "schedule").get("joints", list(ex.DEFAULT_JOINTS))
        initial_q = [ex.PICK_PLACE_SETPOINTS[initial_q][j] for j in joints]
    try:
        return Scenario(
            plant=plant,
            controller=kind,
            controller_config=cfg,
            schedule=schedule,
            duration=duration,
            noise=noise,
            initial_q=initial_q,
            events=build_events(data.get("events")),
            dt=dt,
            labels=labels,
            name=str(data.get("name", "scenario")),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), field="schedule") from None
